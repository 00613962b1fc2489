#include "explicable/labeler.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace explicable {

std::string_view to_string(Label l) {
  return l == Label::Explicable ? "EXPLICABLE" : "INEXPLICABLE";
}

Label label_from_string(std::string_view s) {
  if (s == "EXPLICABLE") return Label::Explicable;
  if (s == "INEXPLICABLE") return Label::Inexplicable;
  throw std::invalid_argument("unknown label '" + std::string(s) + "'");
}

double explicability_score(std::span<const Label> labels) {
  if (labels.empty()) throw EmptySequence("explicability score of an empty label sequence");
  auto explicable = std::count(labels.begin(), labels.end(), Label::Explicable);
  return static_cast<double>(explicable) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Features

FeatureIndex::FeatureIndex(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!ids_.emplace(names_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate feature name '" + names_[i] + "'");
    }
  }
}

int FeatureIndex::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  return it == ids_.end() ? -1 : it->second;
}

const FeatureIndex& standard_feature_index() {
  static const FeatureIndex index({
      "bias",
      "agent=HUMAN",
      "agent=ROBOT",
      "dir=Up",
      "dir=Down",
      "dir=Left",
      "dir=Right",
      "human_delta=-1",
      "human_delta=0",
      "human_delta=+1",
      "human_delta=undef",
      "true_delta=-1",
      "true_delta=0",
      "true_delta=+1",
      "true_delta=undef",
      "deviates_human_path",
      "adjacent_hidden",
      "command_change",
      "segment=first",
      "segment=mid",
      "segment=last",
  });
  return index;
}

namespace {

std::vector<int> distance_field(const GridMap& map, Cell source, View view) {
  std::vector<int> dist(static_cast<std::size_t>(map.width * map.height),
                        FeatureContext::kUnreachable);
  auto idx = [&](Cell c) { return static_cast<std::size_t>(c.row * map.width + c.col); };
  if (map.blocked(source, view)) return dist;
  std::deque<Cell> frontier{source};
  dist[idx(source)] = 0;
  while (!frontier.empty()) {
    Cell c = frontier.front();
    frontier.pop_front();
    for (Direction d : kDirections) {
      Cell n = step(c, d);
      if (map.blocked(n, view) || dist[idx(n)] != FeatureContext::kUnreachable) continue;
      dist[idx(n)] = dist[idx(c)] + 1;
      frontier.push_back(n);
    }
  }
  return dist;
}

}  // namespace

FeatureContext::FeatureContext(const Problem& problem) : problem_(&problem) {
  const GridMap& map = problem.map;
  for (View view : {View::True, View::Human}) {
    auto& fields = dist_[static_cast<std::size_t>(view)];
    fields.reserve(map.rooms.size());
    for (const Room& r : map.rooms) fields.push_back(distance_field(map, r.cell, view));
  }
}

int FeatureContext::distance(View view, int room, Cell from) const {
  const GridMap& map = problem_->map;
  if (!map.in_bounds(from)) return kUnreachable;
  return dist_[static_cast<std::size_t>(view)][static_cast<std::size_t>(room)]
              [static_cast<std::size_t>(from.row * map.width + from.col)];
}

bool FeatureContext::adjacent_to_hidden(Cell c) const {
  for (Direction d : kDirections) {
    if (problem_->map.hidden_obstacles.contains(step(c, d))) return true;
  }
  return false;
}

bool deviates_from_human_path(const FeatureContext& ctx, const TeamState& before,
                              const Action& move) {
  if (!move.is_move() || !before.current_command) return false;
  int room = *before.current_command;
  int d0 = ctx.distance(View::Human, room, before.robot_pos);
  int d1 = ctx.distance(View::Human, room, step(before.robot_pos, move.dir));
  if (d0 == FeatureContext::kUnreachable || d1 == FeatureContext::kUnreachable) return true;
  return d1 - d0 != -1;
}

std::vector<Label> RuleLabeler::label(const CompositePlan& plan, const FeatureContext& ctx) const {
  std::vector<TeamState> states = replay(plan, ctx.problem());
  std::vector<Label> labels(plan.size(), Label::Explicable);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (deviates_from_human_path(ctx, states[i], plan.actions[i])) labels[i] = Label::Inexplicable;
  }
  return labels;
}

std::vector<Label> RuleLabeler::label(const CompositePlan& plan, const Problem& problem) const {
  FeatureContext ctx(problem);
  return label(plan, ctx);
}

namespace {

int delta_feature(int d0, int d1, int closer) {
  if (d0 == FeatureContext::kUnreachable || d1 == FeatureContext::kUnreachable) return closer + 3;
  int delta = d1 - d0;
  if (delta < 0) return closer;
  if (delta == 0) return closer + 1;
  return closer + 2;
}

}  // namespace

std::vector<FeatureVector> extract_features(const CompositePlan& plan, const FeatureContext& ctx) {
  const Problem& problem = ctx.problem();
  std::vector<TeamState> states = replay(plan, problem);
  const auto n = plan.actions.size();

  // Moves per segment, where segments start at each command.
  std::vector<int> move_index(n, 0);
  std::vector<int> segment_moves(n, 0);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    if (plan.actions[j].is_command()) ++j;
    std::size_t end = j;
    while (end < n && plan.actions[end].is_move()) ++end;
    int count = static_cast<int>(end - j);
    for (std::size_t k = j; k < end; ++k) {
      move_index[k] = static_cast<int>(k - j);
      segment_moves[k] = count;
    }
    i = std::max(end, i + 1);
  }

  std::vector<FeatureVector> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Action& a = plan.actions[i];
    const TeamState& before = states[i];
    auto& e = out[i].entries;
    e.emplace_back(feature::Bias, 1.0);
    if (a.is_command()) {
      e.emplace_back(feature::AgentHuman, 1.0);
      if (before.current_command) e.emplace_back(feature::CommandChange, 1.0);
    } else {
      e.emplace_back(feature::AgentRobot, 1.0);
      e.emplace_back(feature::DirUp + static_cast<int>(a.dir), 1.0);
      int room = *before.current_command;
      Cell to = step(before.robot_pos, a.dir);
      e.emplace_back(delta_feature(ctx.distance(View::Human, room, before.robot_pos),
                                   ctx.distance(View::Human, room, to), feature::HumanDeltaCloser),
                     1.0);
      e.emplace_back(delta_feature(ctx.distance(View::True, room, before.robot_pos),
                                   ctx.distance(View::True, room, to), feature::TrueDeltaCloser),
                     1.0);
      if (deviates_from_human_path(ctx, before, a)) e.emplace_back(feature::DeviatesHumanPath, 1.0);
      if (ctx.adjacent_to_hidden(before.robot_pos)) e.emplace_back(feature::AdjacentHidden, 1.0);
      int bucket = std::min(2, 3 * move_index[i] / std::max(1, segment_moves[i]));
      e.emplace_back(feature::SegmentFirst + bucket, 1.0);
    }
    std::sort(e.begin(), e.end());
  }
  return out;
}

std::vector<FeatureVector> extract_features(const CompositePlan& plan, const Problem& problem) {
  FeatureContext ctx(problem);
  return extract_features(plan, ctx);
}

// ---------------------------------------------------------------------------
// Model

LabelerModel::LabelerModel() : LabelerModel(standard_feature_index()) {}

LabelerModel::LabelerModel(FeatureIndex index, double l2_sigma)
    : index_(std::move(index)),
      weights_(static_cast<std::size_t>(index_.size() * kNumLabels + kNumLabels * kNumLabels), 0.0),
      l2_sigma_(l2_sigma) {}

namespace {

constexpr Label kLabels[kNumLabels] = {Label::Explicable, Label::Inexplicable};

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

using Scores = std::vector<std::array<double, kNumLabels>>;

Scores emission_scores(const LabelerModel& model, std::span<const FeatureVector> features) {
  Scores out(features.size());
  const auto& w = model.weights();
  for (std::size_t t = 0; t < features.size(); ++t) {
    for (Label y : kLabels) {
      double s = 0.0;
      for (auto [f, v] : features[t].entries) {
        if (f < 0 || f >= model.num_features()) continue;
        s += v * w[model.emission_slot(f, y)];
      }
      out[t][static_cast<std::size_t>(y)] = s;
    }
  }
  return out;
}

double trans(const LabelerModel& model, int prev, int cur) {
  return model.weights()[model.transition_slot(static_cast<Label>(prev), static_cast<Label>(cur))];
}

Scores forward(const LabelerModel& model, const Scores& emit) {
  Scores alpha(emit.size());
  if (emit.empty()) return alpha;
  alpha[0] = emit[0];
  for (std::size_t t = 1; t < emit.size(); ++t) {
    for (int y = 0; y < kNumLabels; ++y) {
      double acc = -std::numeric_limits<double>::infinity();
      for (int p = 0; p < kNumLabels; ++p) {
        acc = log_sum_exp(acc, alpha[t - 1][static_cast<std::size_t>(p)] + trans(model, p, y));
      }
      alpha[t][static_cast<std::size_t>(y)] = emit[t][static_cast<std::size_t>(y)] + acc;
    }
  }
  return alpha;
}

Scores backward(const LabelerModel& model, const Scores& emit) {
  Scores beta(emit.size());
  if (emit.empty()) return beta;
  beta.back().fill(0.0);
  for (std::size_t t = emit.size() - 1; t-- > 0;) {
    for (int y = 0; y < kNumLabels; ++y) {
      double acc = -std::numeric_limits<double>::infinity();
      for (int nx = 0; nx < kNumLabels; ++nx) {
        acc = log_sum_exp(acc, trans(model, y, nx) + emit[t + 1][static_cast<std::size_t>(nx)] +
                                   beta[t + 1][static_cast<std::size_t>(nx)]);
      }
      beta[t][static_cast<std::size_t>(y)] = acc;
    }
  }
  return beta;
}

double final_log_z(const Scores& alpha) {
  return log_sum_exp(alpha.back()[0], alpha.back()[1]);
}

void check_sequence(const JudgedSequence& seq) {
  if (seq.labels.empty()) throw std::invalid_argument("judged sequence must be nonempty");
  if (seq.features.size() != seq.labels.size()) {
    throw std::invalid_argument("judged sequence features and labels differ in length");
  }
}

// Adds d(log p(labels|features))/dw into grad; returns the log-likelihood.
double accumulate_sequence(const LabelerModel& model, const JudgedSequence& seq,
                           std::vector<double>& grad) {
  Scores emit = emission_scores(model, seq.features);
  Scores alpha = forward(model, emit);
  Scores beta = backward(model, emit);
  double log_z = final_log_z(alpha);
  const std::size_t n = seq.size();

  for (std::size_t t = 0; t < n; ++t) {
    std::array<double, kNumLabels> marginal{};
    for (int y = 0; y < kNumLabels; ++y) {
      marginal[static_cast<std::size_t>(y)] =
          std::exp(alpha[t][static_cast<std::size_t>(y)] + beta[t][static_cast<std::size_t>(y)] - log_z);
    }
    for (auto [f, v] : seq.features[t].entries) {
      if (f < 0 || f >= model.num_features()) continue;
      grad[model.emission_slot(f, seq.labels[t])] += v;
      for (Label y : kLabels) {
        grad[model.emission_slot(f, y)] -= v * marginal[static_cast<std::size_t>(y)];
      }
    }
    if (t == 0) continue;
    grad[model.transition_slot(seq.labels[t - 1], seq.labels[t])] += 1.0;
    for (int p = 0; p < kNumLabels; ++p) {
      for (int y = 0; y < kNumLabels; ++y) {
        double pair = std::exp(alpha[t - 1][static_cast<std::size_t>(p)] + trans(model, p, y) +
                               emit[t][static_cast<std::size_t>(y)] +
                               beta[t][static_cast<std::size_t>(y)] - log_z);
        grad[model.transition_slot(static_cast<Label>(p), static_cast<Label>(y))] -= pair;
      }
    }
  }
  return model.score(seq.features, seq.labels) - log_z;
}

}  // namespace

double LabelerModel::score(std::span<const FeatureVector> features,
                           std::span<const Label> labels) const {
  if (features.size() != labels.size()) {
    throw std::invalid_argument("score: features and labels differ in length");
  }
  Scores emit = emission_scores(*this, features);
  double s = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    s += emit[t][static_cast<std::size_t>(labels[t])];
    if (t > 0) s += weights_[transition_slot(labels[t - 1], labels[t])];
  }
  return s;
}

double LabelerModel::log_partition(std::span<const FeatureVector> features) const {
  if (features.empty()) return 0.0;
  return final_log_z(forward(*this, emission_scores(*this, features)));
}

std::vector<Label> LabelerModel::decode(std::span<const FeatureVector> features) const {
  const std::size_t n = features.size();
  if (n == 0) return {};
  Scores emit = emission_scores(*this, features);
  Scores best(n);
  std::vector<std::array<int, kNumLabels>> back(n);
  best[0] = emit[0];
  for (std::size_t t = 1; t < n; ++t) {
    for (int y = 0; y < kNumLabels; ++y) {
      int arg = 0;
      double top = best[t - 1][0] + trans(*this, 0, y);
      for (int p = 1; p < kNumLabels; ++p) {
        double cand = best[t - 1][static_cast<std::size_t>(p)] + trans(*this, p, y);
        if (cand > top) {
          top = cand;
          arg = p;
        }
      }
      best[t][static_cast<std::size_t>(y)] = emit[t][static_cast<std::size_t>(y)] + top;
      back[t][static_cast<std::size_t>(y)] = arg;
    }
  }
  std::vector<Label> out(n);
  int y = best[n - 1][1] > best[n - 1][0] ? 1 : 0;
  for (std::size_t t = n; t-- > 0;) {
    out[t] = static_cast<Label>(y);
    if (t > 0) y = back[t][static_cast<std::size_t>(y)];
  }
  return out;
}

std::vector<Label> LabelerModel::label(const CompositePlan& plan, const FeatureContext& ctx) const {
  std::vector<Label> labels = decode(extract_features(plan, ctx));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (plan.actions[i].is_command()) labels[i] = Label::Explicable;
  }
  return labels;
}

std::vector<Label> LabelerModel::label(const CompositePlan& plan, const Problem& problem) const {
  FeatureContext ctx(problem);
  return label(plan, ctx);
}

double sequence_log_likelihood(const LabelerModel& model, const JudgedSequence& seq) {
  check_sequence(seq);
  return model.score(seq.features, seq.labels) - model.log_partition(seq.features);
}

double objective(const LabelerModel& model, std::span<const JudgedSequence> corpus) {
  double ll = 0.0;
  for (const auto& seq : corpus) ll += sequence_log_likelihood(model, seq);
  double sq = 0.0;
  for (double w : model.weights()) sq += w * w;
  return ll - sq / (2.0 * model.l2_sigma() * model.l2_sigma());
}

namespace {

double objective_and_gradient(const LabelerModel& model, std::span<const JudgedSequence> corpus,
                              std::vector<double>& grad) {
  grad.assign(model.weights().size(), 0.0);
  double ll = 0.0;
  for (const auto& seq : corpus) {
    check_sequence(seq);
    ll += accumulate_sequence(model, seq, grad);
  }
  const double inv_var = 1.0 / (model.l2_sigma() * model.l2_sigma());
  double sq = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double w = model.weights()[i];
    sq += w * w;
    grad[i] -= w * inv_var;
  }
  return ll - 0.5 * sq * inv_var;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

std::vector<double> gradient(const LabelerModel& model, std::span<const JudgedSequence> corpus) {
  std::vector<double> grad;
  objective_and_gradient(model, corpus, grad);
  return grad;
}

LabelerModel train(std::span<const JudgedSequence> corpus, const TrainOptions& options,
                   const FeatureIndex& index) {
  if (corpus.empty()) throw std::invalid_argument("training corpus is empty");
  if (!(options.l2_sigma > 0.0)) throw std::invalid_argument("l2_sigma must be positive");

  LabelerModel model(index, options.l2_sigma);
  TrainingStats& stats = model.stats();
  std::array<int, kNumLabels> label_counts{};
  for (const auto& seq : corpus) {
    check_sequence(seq);
    ++stats.sequences;
    stats.tokens += static_cast<int>(seq.size());
    for (Label l : seq.labels) ++label_counts[static_cast<std::size_t>(l)];
  }
  for (Label l : kLabels) {
    if (label_counts[static_cast<std::size_t>(l)] == 0) {
      stats.warnings.push_back("DegenerateCorpus: label " + std::string(to_string(l)) +
                               " never occurs");
    }
  }

  // L-BFGS on the negated objective.
  constexpr std::size_t kMemory = 10;
  constexpr double kArmijo = 1e-4;
  const std::size_t dim = model.weights().size();
  std::vector<double> grad;
  double value = objective_and_gradient(model, corpus, grad);
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;

  int iter = 0;
  for (; iter < options.max_iter; ++iter) {
    double gnorm = std::sqrt(dot(grad, grad));
    stats.gradient_norm = gnorm;
    if (gnorm <= options.tol) {
      stats.converged = true;
      break;
    }
    // Ascent direction from the two-loop recursion (grad is the ascent gradient).
    std::vector<double> dir = grad;
    std::vector<double> alphas(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alphas[k] = rho_hist[k] * dot(s_hist[k], dir);
      for (std::size_t i = 0; i < dim; ++i) dir[i] -= alphas[k] * y_hist[k][i];
    }
    if (!s_hist.empty()) {
      double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (double& d : dir) d *= gamma;
    } else {
      for (double& d : dir) d /= gnorm;
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      double beta = rho_hist[k] * dot(y_hist[k], dir);
      for (std::size_t i = 0; i < dim; ++i) dir[i] += s_hist[k][i] * (alphas[k] - beta);
    }
    double slope = dot(grad, dir);
    if (!(slope > 0.0)) {
      dir = grad;
      for (double& d : dir) d /= gnorm;
      slope = dot(grad, dir);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    std::vector<double> old_w = model.weights();
    std::vector<double> new_grad;
    double step = 1.0;
    double new_value = value;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t i = 0; i < dim; ++i) model.weights()[i] = old_w[i] + step * dir[i];
      new_value = objective_and_gradient(model, corpus, new_grad);
      if (std::isfinite(new_value) && new_value >= value + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      model.weights() = old_w;
      stats.warnings.push_back("line search failed at iteration " + std::to_string(iter));
      break;
    }

    std::vector<double> s(dim), y(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      s[i] = model.weights()[i] - old_w[i];
      // Curvature pair for the minimized (negated) objective.
      y[i] = grad[i] - new_grad[i];
    }
    double sy = dot(s, y);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    value = new_value;
    grad = std::move(new_grad);
  }
  stats.iterations = iter;
  stats.final_objective = value;
  stats.gradient_norm = std::sqrt(dot(grad, grad));
  if (stats.gradient_norm <= options.tol) stats.converged = true;
  return model;
}

}  // namespace explicable
