#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ppimtt {

enum class Role { Virus, Human, Bacterium };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

/// 20 canonical residues in alphabetical one-letter order, then the wildcard.
inline constexpr std::string_view kAlphabet = "ACDEFGHIKLMNPQRSTVWYX";

struct ProteinRecord {
  std::string id;
  Role role = Role::Human;
  std::string sequence;

  friend bool operator==(const ProteinRecord&, const ProteinRecord&) = default;
};

/// A labelled pair. For cross-species lists `a` is the pathogen protein and
/// `b` the human one; targets are then 0 or 1. Intra-human targets are
/// normalized confidences in [0, 1].
struct InteractionExample {
  std::string a;
  std::string b;
  double target = 0.0;

  friend bool operator==(const InteractionExample&, const InteractionExample&) = default;
};

// Uppercases and folds B/Z/J/U/O to 'X'. Returns nullopt for non-letters.
std::optional<char> normalize_residue(char c);

std::vector<ProteinRecord> parse_fasta(std::istream& in, Role role = Role::Human);
std::vector<ProteinRecord> parse_fasta(std::string_view text, Role role = Role::Human);
void write_fasta(std::ostream& out, const std::vector<ProteinRecord>& records,
                 std::size_t line_width = 60);

std::vector<InteractionExample> parse_interactions(std::istream& in);
std::vector<InteractionExample> parse_interactions(std::string_view text);
void write_interactions(std::ostream& out, const std::vector<InteractionExample>& examples);

/// Counts for one interaction list, in the shape of a benchmark statistics
/// table: positive/negative pairs and distinct proteins per side on the
/// positive pairs.
struct SplitCounts {
  std::size_t pairs = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t human_proteins = 0;
  std::size_t pathogen_proteins = 0;
  std::size_t duplicates_dropped = 0;
  std::size_t length_filtered_dropped = 0;

  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

struct BundleReport {
  std::size_t proteins = 0;
  std::size_t proteins_too_long = 0;
  SplitCounts vh_train;
  SplitCounts vh_test;
  SplitCounts hh_train;
  // test pairs that also occur in training, dropped from the test list
  std::size_t train_test_overlap_dropped = 0;
};

struct DatasetBundle {
  std::string name;
  Role pathogen_role = Role::Virus;
  std::vector<ProteinRecord> proteins;
  std::vector<InteractionExample> vh_train;
  std::vector<InteractionExample> vh_test;
  std::vector<InteractionExample> hh_train;
  BundleReport report;

  const ProteinRecord* find(std::string_view id) const;
  std::vector<std::string> ids_with_role(Role role) const;
  // rebuild after editing `proteins`
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

struct BundleManifest {
  std::string name = "bundle";
  Role pathogen_role = Role::Virus;
  std::vector<std::filesystem::path> pathogen_fasta;
  std::vector<std::filesystem::path> human_fasta;
  std::vector<std::filesystem::path> vh_train;
  std::vector<std::filesystem::path> vh_test;
  std::vector<std::filesystem::path> hh_train;
  // 0 disables the filter
  std::size_t max_length = 1000;
};

/// Reads the JSON manifest; relative paths are resolved against the
/// manifest's own directory.
BundleManifest read_manifest(const std::filesystem::path& path);

DatasetBundle load_bundle(const BundleManifest& manifest);

/// Builds a bundle from in-memory parts with the same validation as
/// load_bundle: reference checks, role checks, deduplication, the length
/// filter and train/test disjointness.
DatasetBundle assemble_bundle(std::string name, Role pathogen_role,
                              std::vector<ProteinRecord> proteins,
                              std::vector<InteractionExample> vh_train,
                              std::vector<InteractionExample> vh_test,
                              std::vector<InteractionExample> hh_train,
                              std::size_t max_length = 1000);

/// Recomputes the count block for a list against the bundle's proteins.
SplitCounts count_split(const DatasetBundle& bundle, const std::vector<InteractionExample>& list);

struct ExpectedCounts {
  std::string label;
  std::optional<std::size_t> positives;
  std::optional<std::size_t> negatives;
  std::optional<std::size_t> human_proteins;
  std::optional<std::size_t> pathogen_proteins;
};

/// Compares a split against reference statistics; returns one line per
/// mismatch (empty when everything matches).
std::vector<std::string> audit_counts(const SplitCounts& actual, const ExpectedCounts& expected);

}  // namespace ppimtt
