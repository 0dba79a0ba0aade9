#include "laca/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <numeric>
#include <unordered_map>

#include "laca/errors.hpp"
#include "laca/text.hpp"

namespace laca {

std::string_view to_string(MatchMode mode) {
  switch (mode) {
    case MatchMode::Span: return "span";
    case MatchMode::String: return "string";
    case MatchMode::Mixed: return "mixed";
  }
  return "string";
}

EvalReport EvalReport::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  EvalReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = r.precision + r.recall == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  j["tp"] = report.tp;
  j["fp"] = report.fp;
  j["fn"] = report.fn;
  j["match_mode"] = std::string(to_string(report.match_mode));
  return j;
}

bool same_boundary(const SentimentTuple& a, const SentimentTuple& b) {
  if (a.span && b.span) return *a.span == *b.span;
  return text::normalize(a.aspect) == text::normalize(b.aspect);
}

namespace {

// Maximum bipartite matching by augmenting paths; returns the pred index
// matched to each gold tuple.
template <typename Edge>
std::vector<std::optional<std::size_t>> max_matching(std::size_t n_gold, std::size_t n_pred, Edge edge) {
  std::vector<std::optional<std::size_t>> gold_of(n_pred);
  std::vector<bool> visited;
  std::function<bool(std::size_t)> augment = [&](std::size_t g) {
    for (std::size_t p = 0; p < n_pred; ++p) {
      if (visited[p] || !edge(g, p)) continue;
      visited[p] = true;
      if (!gold_of[p] || augment(*gold_of[p])) {
        gold_of[p] = g;
        return true;
      }
    }
    return false;
  };
  for (std::size_t g = 0; g < n_gold; ++g) {
    visited.assign(n_pred, false);
    augment(g);
  }
  std::vector<std::optional<std::size_t>> pred_of(n_gold);
  for (std::size_t p = 0; p < n_pred; ++p) {
    if (gold_of[p]) pred_of[*gold_of[p]] = p;
  }
  return pred_of;
}

std::vector<std::optional<std::size_t>> exact_matches(const TupleSet& gold, const TupleSet& pred) {
  return max_matching(gold.size(), pred.size(), [&](std::size_t g, std::size_t p) {
    return gold[g].polarity == pred[p].polarity && same_boundary(gold[g], pred[p]);
  });
}

}  // namespace

std::size_t count_true_positives(const TupleSet& gold, const TupleSet& pred) {
  const auto matched = exact_matches(gold, pred);
  return static_cast<std::size_t>(
      std::count_if(matched.begin(), matched.end(), [](const auto& m) { return m.has_value(); }));
}

namespace {

// Pairs each gold example with its prediction; throws IdMismatch.
template <typename Visit>
void for_each_aligned(const LabeledDataset& gold, const LabeledDataset& pred, Visit visit) {
  if (gold.size() != pred.size()) {
    throw IdMismatch("gold has " + std::to_string(gold.size()) + " sentences, predictions " +
                     std::to_string(pred.size()));
  }
  std::unordered_map<std::string_view, const LabeledExample*> by_id;
  for (const auto& p : pred) {
    if (!by_id.emplace(p.id, &p).second) throw IdMismatch("prediction id '" + p.id + "' repeats");
  }
  for (const auto& g : gold) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) throw IdMismatch("no prediction for gold id '" + g.id + "'");
    if (it->second->lang != g.lang) {
      throw IdMismatch("language differs for id '" + g.id + "': " + g.lang.str() + " vs " +
                       it->second->lang.str());
    }
    visit(g, *it->second);
  }
}

}  // namespace

EvalReport micro_f1(const LabeledDataset& gold, const LabeledDataset& pred) {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t with_span = 0;
  std::size_t total = 0;
  for_each_aligned(gold, pred, [&](const LabeledExample& g, const LabeledExample& p) {
    const auto matched = count_true_positives(g.tuples, p.tuples);
    tp += matched;
    fp += p.tuples.size() - matched;
    fn += g.tuples.size() - matched;
    for (const auto* set : {&g.tuples, &p.tuples}) {
      for (const auto& t : *set) {
        ++total;
        if (t.span) ++with_span;
      }
    }
  });
  auto report = EvalReport::from_counts(tp, fp, fn);
  report.match_mode = with_span == 0         ? MatchMode::String
                      : with_span == total   ? MatchMode::Span
                                             : MatchMode::Mixed;
  return report;
}

AggregateReport aggregate_runs(std::span<const EvalReport> reports) {
  if (reports.empty()) throw EmptyInput("aggregate_runs needs at least one report");
  AggregateReport agg;
  for (const auto& r : reports) agg.f1s.push_back(r.f1);
  const double n = static_cast<double>(agg.f1s.size());
  agg.mean = std::accumulate(agg.f1s.begin(), agg.f1s.end(), 0.0) / n;
  double ss = 0.0;
  for (double f : agg.f1s) ss += (f - agg.mean) * (f - agg.mean);
  agg.std = std::sqrt(ss / n);
  return agg;
}

nlohmann::ordered_json aggregate_to_json(const AggregateReport& report) {
  nlohmann::ordered_json j;
  j["f1s"] = report.f1s;
  j["mean"] = report.mean;
  j["std"] = report.std;
  return j;
}

ErrorTaxonomy& ErrorTaxonomy::operator+=(const ErrorTaxonomy& o) {
  boundary += o.boundary;
  missing += o.missing;
  extra += o.extra;
  polarity += o.polarity;
  correct += o.correct;
  exact_polarity += o.exact_polarity;
  return *this;
}

nlohmann::ordered_json taxonomy_to_json(const ErrorTaxonomy& t) {
  nlohmann::ordered_json j;
  j["boundary"] = t.boundary;
  j["missing"] = t.missing;
  j["extra"] = t.extra;
  j["polarity"] = t.polarity;
  j["correct"] = t.correct;
  return j;
}

namespace {

std::size_t overlap(const SentimentTuple& g, const SentimentTuple& p) {
  if (g.span && p.span) {
    const auto lo = std::max(g.span->from, p.span->from);
    const auto hi = std::min(g.span->to, p.span->to);
    return hi > lo ? hi - lo : 0;
  }
  const auto a = text::normalize(g.aspect);
  const auto b = text::normalize(p.aspect);
  const auto& shorter = a.size() <= b.size() ? a : b;
  const auto& longer = a.size() <= b.size() ? b : a;
  return longer.find(shorter) != std::string::npos ? text::length(shorter) : 0;
}

}  // namespace

ErrorTaxonomy classify_errors(const TupleSet& gold, const TupleSet& pred) {
  ErrorTaxonomy out;
  std::vector<bool> gold_used(gold.size(), false);
  std::vector<bool> pred_used(pred.size(), false);

  // Pass 1: identical boundary and polarity, as many as possible.
  const auto exact = exact_matches(gold, pred);
  for (std::size_t g = 0; g < gold.size(); ++g) {
    if (!exact[g]) continue;
    gold_used[g] = pred_used[*exact[g]] = true;
    ++out.correct;
  }

  // Pass 2: identical boundary, wrong polarity.
  for (std::size_t g = 0; g < gold.size(); ++g) {
    if (gold_used[g]) continue;
    for (std::size_t p = 0; p < pred.size(); ++p) {
      if (pred_used[p] || !same_boundary(gold[g], pred[p])) continue;
      gold_used[g] = pred_used[p] = true;
      ++out.exact_polarity;
      ++out.polarity;
      break;
    }
  }

  // Pass 3: overlapping boundaries, largest overlap first.
  for (;;) {
    std::size_t best = 0;
    std::size_t best_g = 0;
    std::size_t best_p = 0;
    for (std::size_t g = 0; g < gold.size(); ++g) {
      if (gold_used[g]) continue;
      for (std::size_t p = 0; p < pred.size(); ++p) {
        if (pred_used[p]) continue;
        const auto o = overlap(gold[g], pred[p]);
        if (o > best) {
          best = o;
          best_g = g;
          best_p = p;
        }
      }
    }
    if (best == 0) break;
    gold_used[best_g] = pred_used[best_p] = true;
    ++out.boundary;
    if (gold[best_g].polarity != pred[best_p].polarity) ++out.polarity;
  }

  out.missing = static_cast<std::size_t>(std::count(gold_used.begin(), gold_used.end(), false));
  out.extra = static_cast<std::size_t>(std::count(pred_used.begin(), pred_used.end(), false));
  return out;
}

ErrorTaxonomy classify_errors(const LabeledExample& gold, const LabeledExample& pred) {
  if (gold.id != pred.id) throw IdMismatch("classify_errors: '" + gold.id + "' vs '" + pred.id + "'");
  return classify_errors(gold.tuples, pred.tuples);
}

ErrorTaxonomy classify_errors(const LabeledDataset& gold, const LabeledDataset& pred) {
  ErrorTaxonomy total;
  for_each_aligned(gold, pred, [&](const LabeledExample& g, const LabeledExample& p) {
    total += classify_errors(g.tuples, p.tuples);
  });
  return total;
}

}  // namespace laca
