#include "ppimtt/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "ppimtt/error.hpp"
#include "ppimtt/random.hpp"

namespace ppimtt {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp_probability(double y) {
  return std::clamp(y, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

bool clamped(double y) { return y < kProbabilityClamp || y > 1.0 - kProbabilityClamp; }

double bce(double y, double z) {
  const double p = clamp_probability(y);
  return -(z * std::log(p) + (1.0 - z) * std::log(1.0 - p));
}

void glorot_fill(Matrix& m, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : m.values()) v = rng.uniform_real(-limit, limit);
}

const Matrix& table_for(const Parameters& p, Side side) {
  return side == Side::Pathogen ? p.x_pathogen : p.x_human;
}

const MlpParams& tower_for(const Parameters& p, Side side) {
  return side == Side::Pathogen ? p.theta : p.phi;
}

Side left_side(Task task) { return task == Task::VH ? Side::Pathogen : Side::Human; }

// Pre-activation and ReLU output of one tower for one embedding row.
struct TowerOut {
  std::vector<double> pre;
  std::vector<double> hidden;
};

void tower(const MlpParams& mlp, std::span<const double> x, TowerOut& out) {
  const std::size_t hid = mlp.weight.cols();
  out.pre.assign(mlp.bias.values().begin(), mlp.bias.values().end());
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double xd = x[d];
    if (xd == 0.0) continue;
    const auto wrow = mlp.weight.row(d);
    for (std::size_t k = 0; k < hid; ++k) out.pre[k] += xd * wrow[k];
  }
  out.hidden.resize(hid);
  for (std::size_t k = 0; k < hid; ++k) out.hidden[k] = out.pre[k] > 0.0 ? out.pre[k] : 0.0;
}

double head(std::span<const double> ha, std::span<const double> hb, const Matrix& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < ha.size(); ++k) s += ha[k] * hb[k] * w(0, k);
  return s;
}

const Matrix& head_for(const Parameters& p, Task task) {
  return task == Task::VH ? p.heads.w1 : p.heads.w2;
}

// Accumulates d(loss)/d(params) for one pair given d(loss)/d(logit).
void backprop_pair(const Parameters& p, Task task, const ResolvedPair& pair, const TowerOut& ta,
                   const TowerOut& tb, double g_logit, Parameters& g) {
  const Side sa = left_side(task);
  const Matrix& w = head_for(p, task);
  Matrix& gw = task == Task::VH ? g.heads.w1 : g.heads.w2;
  const std::size_t hid = w.cols();

  std::vector<double> gpre_a(hid), gpre_b(hid);
  for (std::size_t k = 0; k < hid; ++k) {
    gw(0, k) += g_logit * ta.hidden[k] * tb.hidden[k];
    // ReLU subgradient at 0 is 0.
    gpre_a[k] = ta.pre[k] > 0.0 ? g_logit * tb.hidden[k] * w(0, k) : 0.0;
    gpre_b[k] = tb.pre[k] > 0.0 ? g_logit * ta.hidden[k] * w(0, k) : 0.0;
  }

  auto into_tower = [&](Side side, std::size_t row, std::span<const double> gpre) {
    const MlpParams& mlp = tower_for(p, side);
    MlpParams& gm = side == Side::Pathogen ? g.theta : g.phi;
    const auto x = table_for(p, side).row(row);
    auto gx = (side == Side::Pathogen ? g.x_pathogen : g.x_human).row(row);
    for (std::size_t k = 0; k < hid; ++k) gm.bias(0, k) += gpre[k];
    for (std::size_t d = 0; d < x.size(); ++d) {
      const auto wrow = mlp.weight.row(d);
      auto gwrow = gm.weight.row(d);
      double acc = 0.0;
      for (std::size_t k = 0; k < hid; ++k) {
        gwrow[k] += x[d] * gpre[k];
        acc += wrow[k] * gpre[k];
      }
      gx[d] += acc;
    }
  };
  into_tower(sa, pair.a, gpre_a);
  into_tower(Side::Human, pair.b, gpre_b);
}

void check_same_shapes(const Parameters& a, const Parameters& b, const char* what) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!ta[i]->same_shape(*tb[i])) {
      fail(ErrorKind::ShapeMismatch, std::string(what) + ": tensor " +
                                         std::string(Parameters::kNames[i]) + " is " +
                                         std::to_string(tb[i]->rows()) + "x" +
                                         std::to_string(tb[i]->cols()) + ", expected " +
                                         std::to_string(ta[i]->rows()) + "x" +
                                         std::to_string(ta[i]->cols()));
    }
  }
}

std::vector<double> concat_features(const EmbeddingTable& table, const InteractionExample& pair) {
  const auto* a = table.find(pair.a);
  const auto* b = table.find(pair.b);
  if (a == nullptr) fail(ErrorKind::UnknownProtein, "no embedding for '" + pair.a + "'");
  if (b == nullptr) fail(ErrorKind::UnknownProtein, "no embedding for '" + pair.b + "'");
  std::vector<double> f;
  f.reserve(a->size() + b->size());
  f.insert(f.end(), a->begin(), a->end());
  f.insert(f.end(), b->begin(), b->end());
  return f;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void validate(const TrainConfig& c) {
  if (!std::isfinite(c.alpha) || c.alpha < 0.0) fail(ErrorKind::InvalidArgument, "alpha must be finite and >= 0");
  if (!std::isfinite(c.lr) || c.lr <= 0.0) fail(ErrorKind::InvalidArgument, "lr must be finite and > 0");
  if (c.hid == 0) fail(ErrorKind::InvalidArgument, "hid must be positive");
  if (c.batch_size == 0) fail(ErrorKind::InvalidArgument, "batch_size must be positive");
  if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0)) {
    fail(ErrorKind::InvalidArgument, "validation_fraction must lie in (0, 1)");
  }
  if (c.epoch_stride == 0) fail(ErrorKind::InvalidArgument, "epoch_stride must be positive");
  if (!std::isfinite(c.threshold)) fail(ErrorKind::InvalidArgument, "threshold must be finite");
}

std::string_view variant_label(const TrainConfig& config) {
  return config.alpha == 0.0 ? "STT" : "MTT";
}

std::array<Matrix*, 8> Parameters::tensors() {
  return {&x_pathogen, &x_human, &theta.weight, &theta.bias, &phi.weight, &phi.bias, &heads.w1, &heads.w2};
}

std::array<const Matrix*, 8> Parameters::tensors() const {
  return {&x_pathogen, &x_human, &theta.weight, &theta.bias, &phi.weight, &phi.bias, &heads.w1, &heads.w2};
}

Parameters zeros_like(const Parameters& p) {
  Parameters z;
  auto dst = z.tensors();
  const auto src = p.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = Matrix(src[i]->rows(), src[i]->cols());
  return z;
}

IdIndex::IdIndex(std::vector<std::string> sorted_ids) : ids_(std::move(sorted_ids)) {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!rows_.emplace(ids_[i], i).second) fail(ErrorKind::DuplicateId, "id '" + ids_[i] + "' repeated");
  }
}

std::optional<std::size_t> IdIndex::find(std::string_view id) const {
  auto it = rows_.find(std::string(id));
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

ModelState init_model(const TrainConfig& config, const EmbeddingTable& pathogen,
                      const EmbeddingTable& human, std::uint64_t seed) {
  validate(config);
  if (pathogen.dim != human.dim) {
    fail(ErrorKind::DimMismatch, "pathogen embeddings have dim " + std::to_string(pathogen.dim) +
                                     ", human embeddings dim " + std::to_string(human.dim));
  }
  const std::size_t D = human.dim;
  const std::size_t hid = config.hid;

  auto copy_table = [D](const EmbeddingTable& t, IdIndex& index, Matrix& m) {
    std::vector<std::string> ids;
    m = Matrix(t.entries.size(), D);
    std::size_t r = 0;
    for (const auto& [id, values] : t.entries) {
      ids.push_back(id);
      std::copy(values.begin(), values.end(), m.row(r).begin());
      ++r;
    }
    index = IdIndex(std::move(ids));
  };

  ModelState s;
  s.config = config;
  copy_table(pathogen, s.pathogen_ids, s.params.x_pathogen);
  copy_table(human, s.human_ids, s.params.x_human);

  Rng rng(seed);
  s.params.theta.weight = Matrix(D, hid);
  s.params.phi.weight = Matrix(D, hid);
  s.params.theta.bias = Matrix(1, hid);
  s.params.phi.bias = Matrix(1, hid);
  s.params.heads.w1 = Matrix(1, hid);
  s.params.heads.w2 = Matrix(1, hid);
  glorot_fill(s.params.theta.weight, D, hid, rng);
  glorot_fill(s.params.phi.weight, D, hid, rng);
  glorot_fill(s.params.heads.w1, hid, 1, rng);
  glorot_fill(s.params.heads.w2, hid, 1, rng);

  s.adam.first_moment = zeros_like(s.params);
  s.adam.second_moment = zeros_like(s.params);
  return s;
}

std::vector<double> tower_forward(const ModelState& state, Side side, std::string_view id) {
  const auto& index = side == Side::Pathogen ? state.pathogen_ids : state.human_ids;
  auto row = index.find(id);
  if (!row) {
    fail(ErrorKind::UnknownProtein, std::string(side == Side::Pathogen ? "pathogen" : "human") +
                                        " protein '" + std::string(id) + "' not in model");
  }
  TowerOut out;
  tower(tower_for(state.params, side), table_for(state.params, side).row(*row), out);
  return out.hidden;
}

std::vector<ResolvedPair> resolve(const ModelState& state, Task task,
                                  std::span<const InteractionExample> examples) {
  const auto& left = task == Task::VH ? state.pathogen_ids : state.human_ids;
  std::vector<ResolvedPair> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    auto a = left.find(e.a);
    auto b = state.human_ids.find(e.b);
    if (!a) fail(ErrorKind::UnknownProtein, "protein '" + e.a + "' not in model");
    if (!b) fail(ErrorKind::UnknownProtein, "human protein '" + e.b + "' not in model");
    out.push_back(ResolvedPair{*a, *b, e.target});
  }
  return out;
}

double score_resolved(const ModelState& state, Task task, const ResolvedPair& pair) {
  TowerOut ta, tb;
  const Side sa = left_side(task);
  tower(tower_for(state.params, sa), table_for(state.params, sa).row(pair.a), ta);
  tower(state.params.phi, state.params.x_human.row(pair.b), tb);
  return sigmoid(head(ta.hidden, tb.hidden, head_for(state.params, task)));
}

double score_pair(const ModelState& state, Task task, std::string_view a, std::string_view b) {
  const InteractionExample e{std::string(a), std::string(b), 0.0};
  return score_resolved(state, task, resolve(state, task, std::span(&e, 1)).front());
}

LossBreakdown evaluate_loss(const ModelState& state, std::span<const ResolvedPair> vh,
                            std::span<const ResolvedPair> hh) {
  LossBreakdown l;
  for (const auto& p : vh) l.vh += bce(score_resolved(state, Task::VH, p), p.target);
  if (state.config.l1_reduction == Reduction::Mean && !vh.empty()) l.vh /= static_cast<double>(vh.size());
  for (const auto& p : hh) {
    const double d = score_resolved(state, Task::HH, p) - p.target;
    l.hh += d * d;
  }
  if (!hh.empty()) l.hh /= static_cast<double>(hh.size());
  l.total = l.vh + state.config.alpha * l.hh;
  return l;
}

double loss_vh(const ModelState& state, std::span<const InteractionExample> batch) {
  return evaluate_loss(state, resolve(state, Task::VH, batch), {}).vh;
}

double loss_hh(const ModelState& state, std::span<const InteractionExample> batch) {
  return evaluate_loss(state, {}, resolve(state, Task::HH, batch)).hh;
}

double total_loss(const ModelState& state, std::span<const InteractionExample> vh,
                  std::span<const InteractionExample> hh) {
  return evaluate_loss(state, resolve(state, Task::VH, vh), resolve(state, Task::HH, hh)).total;
}

LossBreakdown backward_into(const ModelState& state, std::span<const ResolvedPair> vh,
                            std::span<const ResolvedPair> hh, Parameters& grads) {
  check_same_shapes(state.params, grads, "gradient buffer");
  for (auto* t : grads.tensors()) t->fill(0.0);

  const Parameters& p = state.params;
  LossBreakdown l;
  TowerOut ta, tb;

  const double vh_scale =
      state.config.l1_reduction == Reduction::Mean && !vh.empty() ? 1.0 / static_cast<double>(vh.size()) : 1.0;
  for (const auto& pair : vh) {
    tower(p.theta, p.x_pathogen.row(pair.a), ta);
    tower(p.phi, p.x_human.row(pair.b), tb);
    const double y = sigmoid(head(ta.hidden, tb.hidden, p.heads.w1));
    l.vh += bce(y, pair.target);
    // d bce / d logit is y - z away from the clamp and 0 where it is active.
    const double g = clamped(y) ? 0.0 : (y - pair.target) * vh_scale;
    if (g != 0.0) backprop_pair(p, Task::VH, pair, ta, tb, g, grads);
  }
  l.vh *= vh_scale;

  const double alpha = state.config.alpha;
  if (!hh.empty()) {
    const double hh_scale = 1.0 / static_cast<double>(hh.size());
    for (const auto& pair : hh) {
      tower(p.phi, p.x_human.row(pair.a), ta);
      tower(p.phi, p.x_human.row(pair.b), tb);
      const double y = sigmoid(head(ta.hidden, tb.hidden, p.heads.w2));
      const double d = y - pair.target;
      l.hh += d * d;
      const double g = alpha * 2.0 * d * y * (1.0 - y) * hh_scale;
      if (g != 0.0) backprop_pair(p, Task::HH, pair, ta, tb, g, grads);
    }
    l.hh *= hh_scale;
  }
  l.total = l.vh + alpha * l.hh;
  return l;
}

GradientResult backward(const ModelState& state, std::span<const InteractionExample> vh,
                        std::span<const InteractionExample> hh) {
  GradientResult r;
  r.gradients = zeros_like(state.params);
  r.loss = backward_into(state, resolve(state, Task::VH, vh), resolve(state, Task::HH, hh), r.gradients);
  return r;
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t step, double lr, const AdamHyper& hyper) {
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad[i];
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

void adam_step(ModelState& state, const Parameters& grads) {
  check_same_shapes(state.params, grads, "adam_step");
  check_same_shapes(state.params, state.adam.first_moment, "adam first moment");
  check_same_shapes(state.params, state.adam.second_moment, "adam second moment");
  ++state.adam.step;
  auto params = state.params.tensors();
  auto m = state.adam.first_moment.tensors();
  auto v = state.adam.second_moment.tensors();
  const auto g = grads.tensors();
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update(params[i]->values(), g[i]->values(), m[i]->values(), v[i]->values(),
                state.adam.step, state.config.lr);
  }
}

NaiveBaseline naive_baseline_fit(const EmbeddingTable& embeddings,
                                 std::span<const InteractionExample> train, const TrainConfig& config) {
  validate(config);
  NaiveBaseline model;
  model.dim = embeddings.dim;
  model.weights.assign(2 * model.dim, 0.0);

  // Canonical order first, so the fit does not depend on input order.
  std::vector<InteractionExample> data(train.begin(), train.end());
  std::sort(data.begin(), data.end(), [](const auto& x, const auto& y) {
    return std::tie(x.a, x.b, x.target) < std::tie(y.a, y.b, y.target);
  });
  std::vector<std::vector<double>> features;
  features.reserve(data.size());
  for (const auto& e : data) {
    features.push_back(concat_features(embeddings, e));
    if (features.back().size() != model.weights.size()) {
      fail(ErrorKind::DimMismatch, "pair (" + e.a + ", " + e.b + ") has inconsistent embedding widths");
    }
  }
  if (data.empty()) return model;

  std::vector<double> mw(model.weights.size()), vw(model.weights.size());
  std::vector<double> gw(model.weights.size());
  double mb = 0.0, vb = 0.0;
  std::uint64_t step = 0;

  Rng rng(derive_seed(config.seed, 0x4E41495645ull));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::min(config.batch_size, data.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0.0;
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& f = features[order[i]];
        const double y = sigmoid(dot(model.weights, f) + model.bias);
        const double g = clamped(y) ? 0.0 : (y - data[order[i]].target) * scale;
        for (std::size_t k = 0; k < f.size(); ++k) gw[k] += g * f[k];
        gb += g;
      }
      ++step;
      adam_update(model.weights, gw, mw, vw, step, config.lr);
      adam_update(std::span(&model.bias, 1), std::span(&gb, 1), std::span(&mb, 1), std::span(&vb, 1),
                  step, config.lr);
    }
  }
  return model;
}

double naive_baseline_score(const NaiveBaseline& model, const EmbeddingTable& embeddings,
                            const InteractionExample& pair) {
  const auto f = concat_features(embeddings, pair);
  if (f.size() != model.weights.size()) {
    fail(ErrorKind::DimMismatch, "baseline expects " + std::to_string(model.weights.size()) +
                                     " features, pair has " + std::to_string(f.size()));
  }
  return sigmoid(dot(model.weights, f) + model.bias);
}

double naive_baseline_loss(const NaiveBaseline& model, const EmbeddingTable& embeddings,
                           std::span<const InteractionExample> set) {
  if (set.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : set) total += bce(naive_baseline_score(model, embeddings, e), e.target);
  return total / static_cast<double>(set.size());
}

}  // namespace ppimtt
