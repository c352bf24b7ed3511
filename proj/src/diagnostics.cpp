#include "otta/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

#include "otta/format.hpp"

namespace otta {

// ---------------------------------------------------------------------------
// Simplex tracer
// ---------------------------------------------------------------------------

RowMatrix simplex_weights() {
  RowMatrix w(3, 2);
  const double s3 = std::sqrt(3.0) / 2.0;
  w << 0.0, 1.0,      // 90 degrees
      -s3, -0.5,      // 210 degrees
       s3, -0.5;      // 330 degrees
  return w;
}

namespace {

Eigen::Vector3d guarded_cosines(const RowMatrix& w, const Eigen::Vector2d& z) {
  const double zn = std::sqrt(z.squaredNorm() + kNormGuard);
  Eigen::Vector3d c;
  for (int i = 0; i < 3; ++i) {
    c[i] = w.row(i).dot(z) / (w.row(i).norm() * zn);
  }
  return c;
}

int argmax3(const Eigen::Vector3d& v) {
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

Eigen::Vector3d softmax3(const Eigen::Vector3d& logits) {
  Eigen::Vector3d e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

double entropy3(const Eigen::Vector3d& p) {
  double h = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

}  // namespace

SimplexTrace simplex_trace(LossKind loss, const Eigen::Vector3d& init_p, double lr, int steps,
                           SimplexParam param) {
  if (loss == LossKind::None) throw std::invalid_argument("simplex: pick one of em|pl|com|comm");
  if (lr < 0.0) throw std::invalid_argument("simplex: learning rate must be >= 0");
  if (steps < 1) throw std::invalid_argument("simplex: steps must be >= 1");
  for (int i = 0; i < 3; ++i) {
    if (!(init_p[i] > 0.0)) {
      throw std::invalid_argument("simplex: init probabilities must be strictly positive");
    }
  }
  if (std::abs(init_p.sum() - 1.0) > 1e-6) {
    throw std::invalid_argument("simplex: init probabilities must sum to 1");
  }
  if (param == SimplexParam::LogitsDirect && (loss == LossKind::Com || loss == LossKind::Comm)) {
    throw std::invalid_argument("simplex: logits parametrization applies to em|pl only");
  }

  const RowMatrix w = simplex_weights();
  const Eigen::MatrixXd pinv = w.completeOrthogonalDecomposition().pseudoInverse();

  // Centered log-probabilities are exact logits for this geometry.
  Eigen::Vector3d t = init_p.array().log();
  t.array() -= t.mean();
  Eigen::Vector2d z = pinv * t;
  if ((loss == LossKind::Com || loss == LossKind::Comm) && z.norm() < 1e-6) {
    throw std::invalid_argument(
        "simplex: near-uniform initialization maps to |z| < 1e-6 where the cosine losses are "
        "undefined");
  }

  Eigen::Vector3d logits = t;
  const Tensor w_tensor = Tensor::from_matrix(w);

  SimplexTrace trace;
  trace.loss = loss;
  trace.lr = lr;
  trace.steps.reserve(static_cast<size_t>(steps) + 1);

  auto record = [&](int step_idx) {
    SimplexStep s;
    s.step = step_idx;
    const Eigen::Vector3d lg = param == SimplexParam::FeatureZ ? Eigen::Vector3d(w * z) : logits;
    s.p = softmax3(lg);
    s.entropy = entropy3(s.p);
    const Eigen::Vector2d zz = param == SimplexParam::FeatureZ ? z : Eigen::Vector2d(pinv * lg);
    s.cosines = guarded_cosines(w, zz);
    s.pred_class = argmax3(s.cosines);
    trace.steps.push_back(s);
  };

  for (int step = 0; step < steps; ++step) {
    record(step);
    Tape tape;
    if (param == SimplexParam::FeatureZ) {
      Var zv = tape.leaf(Tensor::from_matrix(z.transpose()));
      Var lg = matmul(zv, tape.constant(w_tensor), false, true);
      LossTerms terms;
      switch (loss) {
        case LossKind::Em: terms = loss_em_graph(lg); break;
        case LossKind::Pl: terms = loss_pl_graph(lg); break;
        case LossKind::Com: terms = loss_com_graph(zv, tape.constant(w_tensor)); break;
        case LossKind::Comm: terms = loss_comm_graph(zv, tape.constant(w_tensor)); break;
        case LossKind::None: break;
      }
      Gradients grads = backward(terms.total);
      const Tensor& g = grads.at(zv);
      z[0] -= lr * g(0, 0);
      z[1] -= lr * g(0, 1);
    } else {
      Var lg = tape.leaf(Tensor::from_matrix(logits.transpose()));
      LossTerms terms = loss == LossKind::Em ? loss_em_graph(lg) : loss_pl_graph(lg);
      Gradients grads = backward(terms.total);
      const Tensor& g = grads.at(lg);
      for (int i = 0; i < 3; ++i) logits[i] -= lr * g(0, i);
    }
  }
  record(steps);
  return trace;
}

// ---------------------------------------------------------------------------
// Correctness histograms
// ---------------------------------------------------------------------------

namespace {

HistogramPair make_histogram(const std::string& quantity, double lo, double hi, int bins) {
  HistogramPair h;
  h.quantity = quantity;
  h.edges.resize(static_cast<size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) {
    h.edges[static_cast<size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / bins;
  }
  h.count_correct.assign(static_cast<size_t>(bins), 0);
  h.count_incorrect.assign(static_cast<size_t>(bins), 0);
  return h;
}

void insert(HistogramPair& h, double v, bool correct) {
  const double lo = h.edges.front(), hi = h.edges.back();
  const int bins = static_cast<int>(h.count_correct.size());
  int idx = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
  idx = std::clamp(idx, 0, bins - 1);  // the top edge closes the last bin
  (correct ? h.count_correct : h.count_incorrect)[static_cast<size_t>(idx)]++;
}

}  // namespace

std::pair<HistogramPair, HistogramPair> correctness_histograms(const Model& model,
                                                               const Dataset& data, int bins,
                                                               StatsMode stats,
                                                               Index batch_size) {
  if (data.size() == 0) throw std::invalid_argument("correctness_histograms: empty dataset");
  if (bins < 1) throw std::invalid_argument("correctness_histograms: bins must be >= 1");

  const double log_c = std::log(static_cast<double>(model.classes()));
  HistogramPair h_entropy = make_histogram("entropy", 0.0, log_c, bins);
  HistogramPair h_cosine = make_histogram("cosine_pred", -1.0, 1.0, bins);

  for (Index start = 0; start < data.size(); start += batch_size) {
    const Index count = std::min(batch_size, data.size() - start);
    if (stats == StatsMode::EvalBatch && count < 2) break;
    RowMatrix x(count, data.dim());
    for (Index i = 0; i < count; ++i) x.row(i) = data.x.mat().row(start + i);
    auto [features, logits] = model.forward_eval(Tensor::from_matrix(x), stats);

    const Eigen::VectorXd ent = entropy(softmax_probs(logits));
    const CosineMatrix cos = cosine_matrix(features, model.head().omega);
    const Tensor max_cos = max_along(cos.values, 1).values;
    const std::vector<Index> pred = max_along(logits, 1).indices;

    for (Index i = 0; i < count; ++i) {
      const bool correct =
          static_cast<int>(pred[static_cast<size_t>(i)]) == data.y[static_cast<size_t>(start + i)];
      insert(h_entropy, ent[i], correct);
      insert(h_cosine, max_cos(i, 0), correct);
    }
  }
  return {h_entropy, h_cosine};
}

// ---------------------------------------------------------------------------
// Batch sweep
// ---------------------------------------------------------------------------

std::vector<SweepCell> batch_sweep(const Model& checkpoint, const Benchmark& bench,
                                   const std::vector<Index>& batch_sizes,
                                   const std::vector<LossKind>& losses,
                                   const std::vector<std::uint64_t>& seeds,
                                   const AdaptConfig& base, int threads) {
  if (batch_sizes.empty() || losses.empty() || seeds.empty()) {
    throw std::invalid_argument("batch_sweep: batch sizes, losses and seeds must be non-empty");
  }
  if (threads < 1) threads = 1;

  // One corrupted test set per seed, shared by all cells of that seed.
  const SplitDataset split = gen_blobs(bench.dataset);
  std::map<std::uint64_t, Dataset> corrupted;
  for (std::uint64_t s : seeds) {
    if (!corrupted.count(s)) {
      corrupted.emplace(s, apply_corruption(split.test, {bench.kind, bench.severity, s}, bench.table));
    }
  }

  std::vector<SweepCell> cells;
  for (LossKind loss : losses) {
    for (Index bs : batch_sizes) {
      for (std::uint64_t s : seeds) {
        SweepCell c;
        c.loss = loss;
        c.batch_size = bs;
        c.seed = s;
        cells.push_back(c);
      }
    }
  }

  auto run_cell = [&](SweepCell& cell) {
    try {
      AdaptConfig cfg = base;
      cfg.loss = cell.loss;
      cfg.batch_size = cell.batch_size;
      cfg.seed = cell.seed;
      const Index min_batch = cfg.stats == StatsMode::EvalBatch ? 2 : 1;
      Stream stream = make_stream(corrupted.at(cell.seed), cfg.batch_size, cfg.seed, min_batch);
      Model model = checkpoint;
      RunReport report = run_stream(model, stream, cfg);
      if (!report.cumulative_top1_error) throw std::invalid_argument("empty stream");
      cell.final_err = *report.cumulative_top1_error;
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
  };

  if (threads == 1) {
    for (SweepCell& c : cells) run_cell(c);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = static_cast<size_t>(t); i < cells.size();
             i += static_cast<size_t>(threads)) {
          run_cell(cells[i]);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return cells;
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

std::string trace_to_csv(const SimplexTrace& trace) {
  std::string out = "step,p0,p1,p2,entropy,cos0,cos1,cos2,pred_class\n";
  for (const SimplexStep& s : trace.steps) {
    out += std::to_string(s.step);
    for (int i = 0; i < 3; ++i) out += ',' + fmt_g9(s.p[i]);
    out += ',' + fmt_g9(s.entropy);
    for (int i = 0; i < 3; ++i) out += ',' + fmt_g9(s.cosines[i]);
    out += ',' + std::to_string(s.pred_class) + '\n';
  }
  return out;
}

void write_trace_csv(const SimplexTrace& trace, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot write trace CSV: " + path);
  f << trace_to_csv(trace);
}

std::string sweep_to_csv(const std::vector<SweepCell>& cells) {
  std::string out = "loss,batch_size,seed,final_err\n";
  for (const SweepCell& c : cells) {
    out += std::string(to_string(c.loss)) + ',' + std::to_string(c.batch_size) + ',' +
           std::to_string(c.seed) + ',' + fmt_g9(c.final_err) + '\n';
  }
  return out;
}

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot write sweep CSV: " + path);
  f << sweep_to_csv(cells);
}

std::string histograms_to_csv(const HistogramPair& a, const HistogramPair& b) {
  std::string out = "quantity,bin_lo,bin_hi,count_correct,count_incorrect\n";
  for (const HistogramPair* h : {&a, &b}) {
    for (std::size_t i = 0; i < h->count_correct.size(); ++i) {
      out += h->quantity + ',' + fmt_g9(h->edges[i]) + ',' + fmt_g9(h->edges[i + 1]) + ',' +
             std::to_string(h->count_correct[i]) + ',' + std::to_string(h->count_incorrect[i]) +
             '\n';
    }
  }
  return out;
}

void write_histograms_csv(const HistogramPair& a, const HistogramPair& b,
                          const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot write histogram CSV: " + path);
  f << histograms_to_csv(a, b);
}

// ---------------------------------------------------------------------------
// SVG emission
// ---------------------------------------------------------------------------

namespace {

struct Pt {
  double x, y;
};

std::string svg_open(int w, int h) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" "
         "width=\"" +
         std::to_string(w) + "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " +
         std::to_string(w) + " " + std::to_string(h) + "\">\n";
}

}  // namespace

void write_trace_svg(const SimplexTrace& trace, const std::string& path) {
  if (trace.steps.empty()) throw std::invalid_argument("trace SVG: empty trace");
  // Vertex ordering: class 0 top, class 1 bottom-left, class 2 bottom-right.
  const Pt v0{300, 40}, v1{40, 500}, v2{560, 500};
  auto project = [&](const Eigen::Vector3d& p) -> Pt {
    return {p[0] * v0.x + p[1] * v1.x + p[2] * v2.x, p[0] * v0.y + p[1] * v1.y + p[2] * v2.y};
  };

  std::string s = svg_open(600, 540);
  s += "<polygon points=\"300,40 40,500 560,500\" fill=\"none\" stroke=\"#888\" "
       "stroke-width=\"1\"/>\n";
  s += "<text x=\"300\" y=\"28\" text-anchor=\"middle\" font-size=\"14\">class 0</text>\n";
  s += "<text x=\"36\" y=\"522\" text-anchor=\"middle\" font-size=\"14\">class 1</text>\n";
  s += "<text x=\"560\" y=\"522\" text-anchor=\"middle\" font-size=\"14\">class 2</text>\n";

  if (trace.steps.size() > 1) {
    s += "<polyline fill=\"none\" stroke=\"#7a3fa8\" stroke-width=\"1.5\" points=\"";
    for (const SimplexStep& st : trace.steps) {
      const Pt p = project(st.p);
      s += fmt_g(p.x, 6) + ',' + fmt_g(p.y, 6) + ' ';
    }
    s += "\"/>\n";
  }
  const Pt first = project(trace.steps.front().p);
  const Pt last = project(trace.steps.back().p);
  s += "<circle cx=\"" + fmt_g(first.x, 6) + "\" cy=\"" + fmt_g(first.y, 6) +
       "\" r=\"4\" fill=\"#2b8a3e\"/>\n";
  s += "<circle cx=\"" + fmt_g(last.x, 6) + "\" cy=\"" + fmt_g(last.y, 6) +
       "\" r=\"4\" fill=\"#c92a2a\"/>\n";
  s += "<text x=\"12\" y=\"18\" font-size=\"13\">loss=" + std::string(to_string(trace.loss)) +
       " lr=" + fmt_g9(trace.lr) + "</text>\n";
  s += "</svg>\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot write trace SVG: " + path);
  f << s;
}

void write_sweep_svg(const std::vector<SweepCell>& cells, const std::string& path) {
  if (cells.empty()) throw std::invalid_argument("sweep SVG: no cells");

  // mean final error per (loss, batch size)
  std::map<LossKind, std::map<Index, std::pair<double, long>>> agg;
  for (const SweepCell& c : cells) {
    if (c.failed) continue;
    auto& [sum, n] = agg[c.loss][c.batch_size];
    sum += c.final_err;
    n += 1;
  }

  std::vector<Index> sizes;
  for (const auto& [loss, by_size] : agg) {
    for (const auto& [bs, _] : by_size) {
      if (std::find(sizes.begin(), sizes.end(), bs) == sizes.end()) sizes.push_back(bs);
    }
  }
  std::sort(sizes.begin(), sizes.end());

  const int W = 640, H = 440;
  const double x0 = 70, x1 = 600, y0 = 380, y1 = 40;
  auto xpos = [&](std::size_t i) {
    return sizes.size() == 1 ? (x0 + x1) / 2
                             : x0 + (x1 - x0) * static_cast<double>(i) /
                                        static_cast<double>(sizes.size() - 1);
  };

  double max_err = 0.0;
  for (const auto& [loss, by_size] : agg) {
    for (const auto& [bs, sn] : by_size) max_err = std::max(max_err, sn.first / sn.second);
  }
  if (max_err <= 0.0) max_err = 1.0;
  auto ypos = [&](double err) { return y0 + (y1 - y0) * err / max_err; };

  const char* colors[] = {"#1864ab", "#c92a2a", "#2b8a3e", "#e67700", "#5f3dc4"};
  std::string s = svg_open(W, H);
  s += "<line x1=\"70\" y1=\"380\" x2=\"600\" y2=\"380\" stroke=\"#444\"/>\n";
  s += "<line x1=\"70\" y1=\"380\" x2=\"70\" y2=\"40\" stroke=\"#444\"/>\n";
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    s += "<text x=\"" + fmt_g(xpos(i), 6) + "\" y=\"398\" text-anchor=\"middle\" font-size=\"12\">" +
         std::to_string(sizes[i]) + "</text>\n";
  }
  s += "<text x=\"335\" y=\"424\" text-anchor=\"middle\" font-size=\"13\">batch size</text>\n";
  s += "<text x=\"20\" y=\"210\" font-size=\"13\" transform=\"rotate(-90 20 210)\">top-1 error</text>\n";

  int color_idx = 0;
  int legend_y = 56;
  for (const auto& [loss, by_size] : agg) {
    const char* color = colors[color_idx++ % 5];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      auto it = by_size.find(sizes[i]);
      if (it == by_size.end()) continue;
      s += fmt_g(xpos(i), 6) + ',' + fmt_g(ypos(it->second.first / it->second.second), 6) + ' ';
    }
    s += "\"/>\n";
    s += "<text x=\"540\" y=\"" + std::to_string(legend_y) + "\" font-size=\"12\" fill=\"" + color +
         "\">" + to_string(loss) + "</text>\n";
    legend_y += 16;
  }
  s += "</svg>\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot write sweep SVG: " + path);
  f << s;
}

}  // namespace otta
