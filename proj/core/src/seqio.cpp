#include "ppimtt/seqio.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>
#include <utility>

#include <nlohmann/json.hpp>

#include "ppimtt/error.hpp"
#include "ppimtt/log.hpp"
#include "ppimtt/numeric_text.hpp"

namespace ppimtt {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string read_all(std::istream& in) {
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Calls fn(line, line_number) with the trailing CR removed.
template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line, ++line_no);
    pos = end + 1;
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  return in;
}

struct PairKey {
  std::string first;
  std::string second;
  auto operator<=>(const PairKey&) const = default;
};

PairKey unordered_key(const InteractionExample& e) {
  return e.a <= e.b ? PairKey{e.a, e.b} : PairKey{e.b, e.a};
}

std::vector<std::filesystem::path> path_list(const nlohmann::json& node,
                                             const std::filesystem::path& base,
                                             const char* key) {
  std::vector<std::filesystem::path> out;
  if (node.is_null()) return out;
  auto add = [&](const nlohmann::json& item) {
    if (!item.is_string()) fail(ErrorKind::Config, std::string("'") + key + "' entries must be paths");
    std::filesystem::path p = item.get<std::string>();
    out.push_back(p.is_absolute() ? p : base / p);
  };
  if (node.is_array()) {
    for (const auto& item : node) add(item);
  } else {
    add(node);
  }
  return out;
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Virus: return "virus";
    case Role::Human: return "human";
    case Role::Bacterium: return "bacterium";
  }
  return "unknown";
}

std::optional<Role> parse_role(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "virus") return Role::Virus;
  if (lower == "human") return Role::Human;
  if (lower == "bacterium" || lower == "bacteria") return Role::Bacterium;
  return std::nullopt;
}

std::optional<char> normalize_residue(char c) {
  if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  if (c < 'A' || c > 'Z') return std::nullopt;
  switch (c) {
    case 'B':
    case 'Z':
    case 'J':
    case 'U':
    case 'O':
      return 'X';
    default:
      return c;
  }
}

std::vector<ProteinRecord> parse_fasta(std::string_view text, Role role) {
  if (trim(text).empty()) fail(ErrorKind::EmptyFile, "no FASTA records");

  std::vector<ProteinRecord> records;
  bool open = false;
  auto close_record = [&] {
    if (open && records.back().sequence.empty()) {
      fail(ErrorKind::EmptySequence, "record '" + records.back().id + "' has no residues");
    }
  };

  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (!line.empty() && line.front() == '>') {
      close_record();
      std::string_view header = line.substr(1);
      std::string id;
      for_each_token(header, [&](std::string_view tok) {
        if (id.empty()) id = std::string(tok);
      });
      if (id.empty()) {
        fail(ErrorKind::MissingHeader, "line " + std::to_string(line_no) + ": header without identifier");
      }
      records.push_back(ProteinRecord{std::move(id), role, {}});
      open = true;
      return;
    }
    if (trim(line).empty()) return;
    if (!open) {
      fail(ErrorKind::MissingHeader,
           "line " + std::to_string(line_no) + ": sequence data before the first '>' header");
    }
    std::string& seq = records.back().sequence;
    for (char c : line) {
      if (is_space(c)) continue;
      auto residue = normalize_residue(c);
      if (!residue) {
        fail(ErrorKind::InvalidResidue, "record '" + records.back().id + "' line " +
                                            std::to_string(line_no) + ": character '" +
                                            std::string(1, c) + "' at position " +
                                            std::to_string(seq.size() + 1));
      }
      seq.push_back(*residue);
    }
  });
  close_record();
  return records;
}

std::vector<ProteinRecord> parse_fasta(std::istream& in, Role role) {
  return parse_fasta(read_all(in), role);
}

void write_fasta(std::ostream& out, const std::vector<ProteinRecord>& records,
                 std::size_t line_width) {
  if (line_width == 0) line_width = std::string::npos;
  for (const auto& r : records) {
    out << '>' << r.id << '\n';
    for (std::size_t pos = 0; pos < r.sequence.size(); pos += line_width) {
      out << std::string_view(r.sequence).substr(pos, line_width) << '\n';
    }
  }
}

std::vector<InteractionExample> parse_interactions(std::string_view text) {
  std::vector<InteractionExample> out;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (trim(line).empty() || line.front() == '#') return;
    std::vector<std::string_view> cols;
    std::size_t pos = 0;
    while (true) {
      std::size_t tab = line.find('\t', pos);
      cols.push_back(line.substr(pos, tab == std::string_view::npos ? std::string_view::npos : tab - pos));
      if (tab == std::string_view::npos) break;
      pos = tab + 1;
    }
    const std::string where = "line " + std::to_string(line_no);
    if (cols.size() != 3) {
      fail(ErrorKind::MalformedRow, where + ": expected 3 tab-separated columns, found " +
                                        std::to_string(cols.size()));
    }
    auto a = trim(cols[0]);
    auto b = trim(cols[1]);
    if (a.empty() || b.empty()) fail(ErrorKind::MalformedRow, where + ": empty protein id");
    auto target = parse_double(trim(cols[2]));
    if (!target) {
      fail(ErrorKind::MalformedRow, where + ": target '" + std::string(cols[2]) + "' is not a number");
    }
    if (!(*target >= 0.0 && *target <= 1.0)) {
      fail(ErrorKind::TargetOutOfRange, where + ": target " + std::string(trim(cols[2])) +
                                            " outside [0, 1]");
    }
    out.push_back(InteractionExample{std::string(a), std::string(b), *target});
  });
  return out;
}

std::vector<InteractionExample> parse_interactions(std::istream& in) {
  return parse_interactions(read_all(in));
}

void write_interactions(std::ostream& out, const std::vector<InteractionExample>& examples) {
  for (const auto& e : examples) {
    out << e.a << '\t' << e.b << '\t' << format_double(e.target) << '\n';
  }
}

const ProteinRecord* DatasetBundle::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &proteins[it->second];
}

std::vector<std::string> DatasetBundle::ids_with_role(Role role) const {
  std::vector<std::string> ids;
  for (const auto& p : proteins) {
    if (p.role == role) ids.push_back(p.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void DatasetBundle::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < proteins.size(); ++i) {
    if (!index_.emplace(proteins[i].id, i).second) {
      fail(ErrorKind::DuplicateId, "protein id '" + proteins[i].id + "' occurs more than once");
    }
  }
}

SplitCounts count_split(const DatasetBundle& bundle, const std::vector<InteractionExample>& list) {
  SplitCounts c;
  c.pairs = list.size();
  std::set<std::string> humans;
  std::set<std::string> pathogens;
  for (const auto& e : list) {
    const bool positive = e.target >= 0.5;
    positive ? ++c.positives : ++c.negatives;
    if (!positive) continue;
    for (const auto* id : {&e.a, &e.b}) {
      const auto* rec = bundle.find(*id);
      if (rec == nullptr) continue;
      (rec->role == Role::Human ? humans : pathogens).insert(*id);
    }
  }
  c.human_proteins = humans.size();
  c.pathogen_proteins = pathogens.size();
  return c;
}

DatasetBundle assemble_bundle(std::string name, Role pathogen_role,
                              std::vector<ProteinRecord> proteins,
                              std::vector<InteractionExample> vh_train,
                              std::vector<InteractionExample> vh_test,
                              std::vector<InteractionExample> hh_train, std::size_t max_length) {
  if (pathogen_role == Role::Human) {
    fail(ErrorKind::InvalidArgument, "pathogen role cannot be 'human'");
  }
  DatasetBundle bundle;
  bundle.name = std::move(name);
  bundle.pathogen_role = pathogen_role;

  std::unordered_set<std::string> too_long;
  for (auto& p : proteins) {
    if (max_length > 0 && p.sequence.size() > max_length) {
      too_long.insert(p.id);
      continue;
    }
    bundle.proteins.push_back(std::move(p));
  }
  bundle.reindex();
  bundle.report.proteins = bundle.proteins.size();
  bundle.report.proteins_too_long = too_long.size();
  if (!too_long.empty()) {
    log::warn(bundle.name + ": dropped " + std::to_string(too_long.size()) +
              " proteins longer than " + std::to_string(max_length) + " residues");
  }

  auto clean = [&](std::vector<InteractionExample> list, Role role_a, const char* label,
                   bool binary, SplitCounts& counts) {
    std::vector<InteractionExample> kept;
    std::set<PairKey> seen;
    std::size_t duplicates = 0;
    std::size_t filtered = 0;
    for (auto& e : list) {
      if (too_long.count(e.a) || too_long.count(e.b)) {
        ++filtered;
        continue;
      }
      for (auto [id, role] : {std::pair{&e.a, role_a}, std::pair{&e.b, Role::Human}}) {
        const auto* rec = bundle.find(*id);
        if (rec == nullptr) {
          fail(ErrorKind::UnknownProtein, std::string(label) + ": unknown protein '" + *id + "'");
        }
        if (rec->role != role) {
          fail(ErrorKind::UnknownProtein, std::string(label) + ": protein '" + *id + "' is " +
                                              std::string(to_string(rec->role)) + ", expected " +
                                              std::string(to_string(role)));
        }
      }
      if (binary && e.target != 0.0 && e.target != 1.0) {
        fail(ErrorKind::TargetOutOfRange, std::string(label) + ": cross-species target for (" + e.a +
                                              ", " + e.b + ") must be 0 or 1");
      }
      if (!seen.insert(unordered_key(e)).second) {
        ++duplicates;
        continue;
      }
      kept.push_back(std::move(e));
    }
    if (duplicates > 0) {
      log::warn(bundle.name + "/" + label + ": dropped " + std::to_string(duplicates) +
                " duplicate pairs");
    }
    counts = count_split(bundle, kept);
    counts.duplicates_dropped = duplicates;
    counts.length_filtered_dropped = filtered;
    return kept;
  };

  bundle.vh_train = clean(std::move(vh_train), pathogen_role, "vh_train", true, bundle.report.vh_train);
  auto test = clean(std::move(vh_test), pathogen_role, "vh_test", true, bundle.report.vh_test);
  bundle.hh_train = clean(std::move(hh_train), Role::Human, "hh_train", false, bundle.report.hh_train);

  std::set<PairKey> train_keys;
  for (const auto& e : bundle.vh_train) train_keys.insert(unordered_key(e));
  std::size_t overlap = 0;
  for (auto& e : test) {
    if (train_keys.count(unordered_key(e))) {
      ++overlap;
    } else {
      bundle.vh_test.push_back(std::move(e));
    }
  }
  if (overlap > 0) {
    log::warn(bundle.name + ": dropped " + std::to_string(overlap) +
              " test pairs that also occur in training");
    auto dropped = bundle.report.vh_test.duplicates_dropped;
    auto filtered = bundle.report.vh_test.length_filtered_dropped;
    bundle.report.vh_test = count_split(bundle, bundle.vh_test);
    bundle.report.vh_test.duplicates_dropped = dropped;
    bundle.report.vh_test.length_filtered_dropped = filtered;
  }
  bundle.report.train_test_overlap_dropped = overlap;
  return bundle;
}

DatasetBundle load_bundle(const BundleManifest& manifest) {
  std::vector<ProteinRecord> proteins;
  auto read_fasta_files = [&](const std::vector<std::filesystem::path>& paths, Role role) {
    for (const auto& path : paths) {
      auto in = open_input(path);
      try {
        auto records = parse_fasta(in, role);
        std::move(records.begin(), records.end(), std::back_inserter(proteins));
      } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
      }
    }
  };
  read_fasta_files(manifest.pathogen_fasta, manifest.pathogen_role);
  read_fasta_files(manifest.human_fasta, Role::Human);

  auto read_pairs = [](const std::vector<std::filesystem::path>& paths) {
    std::vector<InteractionExample> out;
    for (const auto& path : paths) {
      auto in = open_input(path);
      try {
        auto rows = parse_interactions(in);
        std::move(rows.begin(), rows.end(), std::back_inserter(out));
      } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
      }
    }
    return out;
  };

  return assemble_bundle(manifest.name, manifest.pathogen_role, std::move(proteins),
                         read_pairs(manifest.vh_train), read_pairs(manifest.vh_test),
                         read_pairs(manifest.hh_train), manifest.max_length);
}

BundleManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open manifest '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, "manifest '" + path.string() + "': " + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::Config, "manifest must be a JSON object");

  const auto base = path.parent_path();
  BundleManifest m;
  try {
    m.name = doc.value("name", path.stem().string());
    if (doc.contains("pathogen_role")) {
      auto role = parse_role(doc.at("pathogen_role").get<std::string>());
      if (!role || *role == Role::Human) fail(ErrorKind::Config, "pathogen_role must be virus or bacterium");
      m.pathogen_role = *role;
    }
    if (!doc.contains("fasta") || !doc.at("fasta").is_object()) {
      fail(ErrorKind::Config, "manifest needs a 'fasta' object with 'pathogen' and 'human' entries");
    }
    const auto& fasta = doc.at("fasta");
    m.pathogen_fasta = path_list(fasta.value("pathogen", nlohmann::json()), base, "fasta.pathogen");
    m.human_fasta = path_list(fasta.value("human", nlohmann::json()), base, "fasta.human");
    m.vh_train = path_list(doc.value("vh_train", nlohmann::json()), base, "vh_train");
    m.vh_test = path_list(doc.value("vh_test", nlohmann::json()), base, "vh_test");
    m.hh_train = path_list(doc.value("hh_train", nlohmann::json()), base, "hh_train");
    m.max_length = doc.value("max_length", std::size_t{1000});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, "manifest '" + path.string() + "': " + e.what());
  }
  return m;
}

std::vector<std::string> audit_counts(const SplitCounts& actual, const ExpectedCounts& expected) {
  std::vector<std::string> issues;
  auto check = [&](const char* what, const std::optional<std::size_t>& want, std::size_t got) {
    if (want && *want != got) {
      issues.push_back(expected.label + ": " + what + " expected " + std::to_string(*want) +
                       ", file contains " + std::to_string(got));
    }
  };
  check("positive pairs", expected.positives, actual.positives);
  check("negative pairs", expected.negatives, actual.negatives);
  check("human proteins", expected.human_proteins, actual.human_proteins);
  check("pathogen proteins", expected.pathogen_proteins, actual.pathogen_proteins);
  for (const auto& issue : issues) log::warn("audit " + issue);
  return issues;
}

}  // namespace ppimtt
