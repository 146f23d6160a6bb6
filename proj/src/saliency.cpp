#include "rrl/saliency.hpp"

#include "rrl/errors.hpp"
#include "rrl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace rrl {

const char* head_name(Head h) {
  switch (h) {
    case Head::start: return "start";
    case Head::end: return "end";
    case Head::label: return "label";
  }
  return "?";
}

Head parse_head(std::string_view name) {
  for (Head h : {Head::start, Head::end, Head::label}) {
    if (name == head_name(h)) return h;
  }
  throw ValidationError("unknown saliency head '" + std::string(name) + "'");
}

std::vector<double> integrated_gradients(const ScalarFn& f, const ad::Mat& x, const ad::Mat& baseline, int m) {
  if (m < 1) throw PreconditionError("integrated_gradients: m must be >= 1");
  if (x.rows() != baseline.rows() || x.cols() != baseline.cols()) {
    throw PreconditionError("integrated_gradients: baseline shape mismatch");
  }
  const ad::Mat delta = x - baseline;
  ad::Mat total = ad::Mat::Zero(x.rows(), x.cols());
  ad::Mat grad;
  for (int j = 1; j <= m; ++j) {
    const double alpha = static_cast<double>(j) / m;
    grad = ad::Mat::Zero(x.rows(), x.cols());
    f(baseline + alpha * delta, &grad);
    if (!grad.allFinite()) throw NumericError("integrated_gradients: non-finite gradient");
    total += grad;
  }
  total /= static_cast<double>(m);
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = delta.row(i).dot(total.row(i));
  return out;
}

namespace {

int argmax_in(const ad::Mat& v, Eigen::Index lo, Eigen::Index hi) {
  Eigen::Index best = lo;
  for (Eigen::Index i = lo + 1; i < hi; ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<int>(best);
}

double head_value(const QAForward& f, Head head, int target) {
  switch (head) {
    case Head::start: return f.start.value()(target, 0);
    case Head::end: return f.end.value()(target, 0);
    case Head::label: return f.label.value()(0, target);
  }
  return 0.0;
}

ad::Var head_node(const QAForward& f, Head head, int target) {
  switch (head) {
    case Head::start: return ad::pick(f.start, target, 0);
    case Head::end: return ad::pick(f.end, target, 0);
    case Head::label: return ad::pick(f.label, 0, target);
  }
  return {};
}

}  // namespace

IGResult integrated_gradients(const QAModel& qa, const QAInput& input, Head head, int m) {
  if (input.document.empty()) throw PreconditionError("integrated_gradients: empty document");
  IGResult r;
  r.n_question = input.question.size();
  r.n_history = input.history.size();
  r.n_document = input.document.size();
  const Eigen::Index nq = static_cast<Eigen::Index>(r.n_question);
  const Eigen::Index nh = static_cast<Eigen::Index>(r.n_history);
  const Eigen::Index nd = static_cast<Eigen::Index>(r.n_document);
  const ad::Mat& emb = qa.params[qa.params.index_of("emb")].value;
  const Eigen::Index d = emb.cols();

  ad::Mat x(nq + nh + nd, d);
  Eigen::Index row = 0;
  for (const Tokens* seg : {&input.question, &input.history, &input.document}) {
    for (int id : *seg) x.row(row++) = emb.row(id);
  }
  ad::Mat baseline(x.rows(), d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) baseline.row(i) = emb.row(qa.pad_id);

  auto forward = [&](ad::Tape& tape, const ad::Var& leaf) {
    ad::Var xq, xh;
    if (nq > 0) xq = ad::slice_rows(leaf, 0, nq);
    if (nh > 0) xh = ad::slice_rows(leaf, nq, nh);
    const ad::Var xd = ad::slice_rows(leaf, nq + nh, nd);
    return qa_forward(tape, qa, xq, xh, xd, input.recency, false);
  };

  {
    ad::Tape tape(false);
    const QAForward f = forward(tape, tape.constant(x));
    switch (head) {
      case Head::start: r.target = argmax_in(f.start.value(), 0, nd); break;
      case Head::end: {
        const int s = argmax_in(f.start.value(), 0, nd);
        const Eigen::Index hi = std::min<Eigen::Index>(nd, s + std::max(qa.cfg.max_answer_len, 1));
        r.target = argmax_in(f.end.value(), s, hi);
        break;
      }
      case Head::label: r.target = argmax_in(f.label.value().transpose(), 0, kNumLabels); break;
    }
    r.f_input = head_value(f, head, r.target);
  }
  {
    ad::Tape tape(false);
    r.f_baseline = head_value(forward(tape, tape.constant(baseline)), head, r.target);
  }

  const ScalarFn fn = [&](const ad::Mat& point, ad::Mat* grad) {
    ad::Tape tape;
    const ad::Var leaf = tape.leaf(point);
    const ad::Var out = head_node(forward(tape, leaf), head, r.target);
    tape.backward(out);
    if (leaf.grad().size() > 0) *grad = leaf.grad();
    return out.scalar();
  };
  r.attributions = integrated_gradients(fn, x, baseline, m);
  return r;
}

Distribution segment_distribution(const std::vector<double>& attributions, const Segments& segments, double threshold) {
  if (threshold < 0.0) throw PreconditionError("segment_distribution: negative threshold");
  std::size_t expect = 0;
  for (const Segment& s : segments) {
    if (s.begin != expect || s.end < s.begin) throw PreconditionError("segment_distribution: segments must partition the input");
    expect = s.end;
  }
  if (expect != attributions.size()) throw PreconditionError("segment_distribution: segments must partition the input");

  double scale = 1.0;
  if (threshold > 0.0) {
    double mx = 0.0;
    for (double a : attributions) mx = std::max(mx, std::abs(a));
    scale = mx > 0.0 ? 1.0 / mx : 0.0;
  }
  std::array<double, 3> pos{}, neg{};
  for (std::size_t s = 0; s < 3; ++s) {
    const Segment& seg = segments[s];
    if (seg.end == seg.begin) continue;
    double p = 0.0, n = 0.0;
    for (std::size_t i = seg.begin; i < seg.end; ++i) {
      const double a = attributions[i] * scale;
      if (a > threshold) p += 1.0;
      if (threshold > 0.0 ? a <= -threshold : a < 0.0) n += 1.0;
    }
    const double len = static_cast<double>(seg.end - seg.begin);
    pos[s] = p / len;
    neg[s] = n / len;
  }
  auto normalize = [](std::array<double, 3>& c) {
    const double total = c[0] + c[1] + c[2];
    for (double& v : c) v = total > 0.0 ? 100.0 * v / total : 0.0;
  };
  normalize(pos);
  normalize(neg);
  return Distribution{pos, neg};
}

nlohmann::ordered_json SaliencyReport::to_json() const {
  auto dist = [](const Distribution& d) {
    return nlohmann::ordered_json{{"positive", d.positive}, {"negative", d.negative}};
  };
  return nlohmann::ordered_json{{"n_examples", n_examples},
                                {"completeness",
                                 {{"n_attributions", n_attributions},
                                  {"n_incomplete", n_incomplete},
                                  {"max_relative_error", max_completeness_error}}},
                                {"columns", {"question", "history", "document"}},
                                {"original", {{"sign", dist(sign[0])}, {"significant", dist(significant[0])}}},
                                {"rewritten", {{"sign", dist(sign[1])}, {"significant", dist(significant[1])}}}};
}

double completeness_gap(const IGResult& r) {
  double total = 0.0;
  for (double a : r.attributions) total += a;
  return std::abs(total - (r.f_input - r.f_baseline));
}

bool is_complete(const IGResult& r, double rel) {
  return completeness_gap(r) <= rel * std::abs(r.f_input - r.f_baseline) + 1e-6;
}

SaliencyReport saliency_report(const QAModel& qa, const Dataset& ds, const std::vector<Tokens>* rewrites,
                               const SaliencyConfig& cfg, std::uint64_t seed) {
  if (ds.examples.empty()) throw PreconditionError("saliency_report: empty sample");
  if (cfg.n_examples < 1) throw PreconditionError("saliency_report: n_examples must be >= 1");
  if (cfg.heads.empty()) throw PreconditionError("saliency_report: no heads");
  if (rewrites != nullptr && rewrites->size() != ds.examples.size()) {
    throw PreconditionError("saliency_report: rewrite count mismatch");
  }
  std::vector<std::size_t> order(ds.examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x516));
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(std::min(order.size(), static_cast<std::size_t>(cfg.n_examples)));

  SaliencyReport rep;
  rep.n_examples = order.size();
  // Distributions with a zero-total column are left out of that column's mean.
  std::array<std::array<double, 4>, 2> counts{};
  auto accumulate = [](Distribution& acc, const Distribution& d, double* n_pos, double* n_neg) {
    const double sp = d.positive[0] + d.positive[1] + d.positive[2];
    const double sn = d.negative[0] + d.negative[1] + d.negative[2];
    for (int s = 0; s < 3; ++s) {
      acc.positive[s] += d.positive[s];
      acc.negative[s] += d.negative[s];
    }
    *n_pos += sp > 0.0 ? 1.0 : 0.0;
    *n_neg += sn > 0.0 ? 1.0 : 0.0;
  };
  for (std::size_t idx : order) {
    const CQAExample& ex = ds.examples[idx];
    for (int v = 0; v < 2; ++v) {
      const Tokens& q = v == 1 && rewrites != nullptr ? (*rewrites)[idx] : ex.question.token_ids;
      const QAInput in = make_qa_input(q, ex.history, ex.document.token_ids, qa.cfg, ds.vocab);
      for (Head h : cfg.heads) {
        const IGResult ig = integrated_gradients(qa, in, h, cfg.steps);
        const double diff = std::abs(ig.f_input - ig.f_baseline);
        const double gap = completeness_gap(ig);
        rep.max_completeness_error = std::max(rep.max_completeness_error, diff > 0.0 ? gap / diff : gap);
        rep.n_incomplete += is_complete(ig) ? 0 : 1;
        ++rep.n_attributions;
        const std::size_t a = ig.n_question, b = a + ig.n_history, c = b + ig.n_document;
        const Segments seg{Segment{0, a}, Segment{a, b}, Segment{b, c}};
        auto& n = counts[static_cast<std::size_t>(v)];
        accumulate(rep.sign[v], segment_distribution(ig.attributions, seg, 0.0), &n[0], &n[1]);
        accumulate(rep.significant[v], segment_distribution(ig.attributions, seg, cfg.significance), &n[2], &n[3]);
      }
    }
  }
  for (int v = 0; v < 2; ++v) {
    const auto& n = counts[static_cast<std::size_t>(v)];
    Distribution* tables[] = {&rep.sign[v], &rep.significant[v]};
    for (int t = 0; t < 2; ++t) {
      for (int s = 0; s < 3; ++s) {
        if (n[2 * t] > 0.0) tables[t]->positive[s] /= n[2 * t];
        if (n[2 * t + 1] > 0.0) tables[t]->negative[s] /= n[2 * t + 1];
      }
    }
  }
  return rep;
}

std::string saliency_csv(const SaliencyReport& report) {
  std::ostringstream out;
  out << "table,input,polarity,question,history,document\n";
  char buf[256];
  const char* inputs[] = {"original", "rewritten"};
  for (int t = 0; t < 2; ++t) {
    for (int v = 0; v < 2; ++v) {
      const Distribution& d = t == 0 ? report.sign[v] : report.significant[v];
      const char* pos = t == 0 ? ">0" : ">0.5";
      const char* neg = t == 0 ? "<0" : "<=-0.5";
      std::snprintf(buf, sizeof buf, "%s,%s,%s,%.1f,%.1f,%.1f\n", t == 0 ? "sign" : "significant", inputs[v], pos,
                    d.positive[0], d.positive[1], d.positive[2]);
      out << buf;
      std::snprintf(buf, sizeof buf, "%s,%s,%s,%.1f,%.1f,%.1f\n", t == 0 ? "sign" : "significant", inputs[v], neg,
                    d.negative[0], d.negative[1], d.negative[2]);
      out << buf;
    }
  }
  return out.str();
}

}  // namespace rrl
