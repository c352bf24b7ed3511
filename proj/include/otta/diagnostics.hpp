#pragma once

#include <string>
#include <vector>

#include "otta/adapt.hpp"
#include "otta/data.hpp"
#include "otta/losses.hpp"
#include "otta/model.hpp"

namespace otta {

// ---------------------------------------------------------------------------
// Probability-simplex trajectories (three-class toy problem)
// ---------------------------------------------------------------------------

/// What the tracer optimizes. The default keeps all four losses on one
/// geometry: a feature point z in R^2 under a fixed weight matrix of three
/// unit vectors at 90/210/330 degrees, logits = W z. The alternative
/// optimizes the logits directly (EM/PL only).
enum class SimplexParam { FeatureZ, LogitsDirect };

struct SimplexStep {
  int step = 0;
  Eigen::Vector3d p;        // softmax(W z); non-negative, sums to 1
  double entropy = 0.0;
  Eigen::Vector3d cosines;  // z against the three weight rows
  int pred_class = 0;       // argmax cosine, ties to the lowest index
};

struct SimplexTrace {
  std::vector<SimplexStep> steps;  // length = step count + 1, indices from 0
  LossKind loss = LossKind::Em;
  double lr = 0.0;
};

/// The three fixed unit weight vectors (rows sum to zero by symmetry).
RowMatrix simplex_weights();

/// Plain gradient descent from init_p for `steps` updates, recording the
/// state before each update and once more at the end. init_p must be
/// strictly positive and sum to 1; initializations mapping to |z| < 1e-6
/// are rejected for the cosine losses (the cosine is undefined at z = 0).
SimplexTrace simplex_trace(LossKind loss, const Eigen::Vector3d& init_p, double lr, int steps,
                           SimplexParam param = SimplexParam::FeatureZ);

// ---------------------------------------------------------------------------
// Correctness histograms
// ---------------------------------------------------------------------------

struct HistogramPair {
  std::string quantity;            // "entropy" or "cosine_pred"
  std::vector<double> edges;       // bins + 1 ascending edges
  std::vector<long> count_correct;
  std::vector<long> count_incorrect;
};

/// Frozen-model pass splitting per-sample entropy and maximally-aligned
/// cosine by prediction correctness. Entropy bins cover [0, log C], cosine
/// bins cover [-1, 1].
std::pair<HistogramPair, HistogramPair> correctness_histograms(const Model& model,
                                                               const Dataset& data, int bins,
                                                               StatsMode stats,
                                                               Index batch_size = 128);

// ---------------------------------------------------------------------------
// Batch-size sweep
// ---------------------------------------------------------------------------

struct Benchmark {
  DatasetSpec dataset;  // dataset.seed pins the source data shared by all runs
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 5;
  SeverityTable table = SeverityTable::defaults();
};

struct SweepCell {
  LossKind loss = LossKind::Em;
  Index batch_size = 0;
  std::uint64_t seed = 0;
  double final_err = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
};

/// One run_stream per (loss, batch size, seed) against a shared checkpoint;
/// per seed, all cells see the same corrupted test data. Failed cells are
/// recorded, not fatal. Cells run on up to `threads` workers; the output
/// order is the declared loss x batch_size x seed order regardless.
std::vector<SweepCell> batch_sweep(const Model& checkpoint, const Benchmark& bench,
                                   const std::vector<Index>& batch_sizes,
                                   const std::vector<LossKind>& losses,
                                   const std::vector<std::uint64_t>& seeds,
                                   const AdaptConfig& base, int threads = 1);

// ---------------------------------------------------------------------------
// Emission. CSV is the contract; SVG is a convenience view.
// ---------------------------------------------------------------------------

std::string trace_to_csv(const SimplexTrace& trace);
void write_trace_csv(const SimplexTrace& trace, const std::string& path);

std::string sweep_to_csv(const std::vector<SweepCell>& cells);
void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path);

std::string histograms_to_csv(const HistogramPair& a, const HistogramPair& b);
void write_histograms_csv(const HistogramPair& a, const HistogramPair& b,
                          const std::string& path);

/// Ternary plot of a trace: class 0 at the top vertex, class 1 bottom-left,
/// class 2 bottom-right.
void write_trace_svg(const SimplexTrace& trace, const std::string& path);

/// Mean final error vs batch size, one polyline per loss.
void write_sweep_svg(const std::vector<SweepCell>& cells, const std::string& path);

}  // namespace otta
