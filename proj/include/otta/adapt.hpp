#pragma once

#include <optional>
#include <string>
#include <vector>

#include "otta/data.hpp"
#include "otta/losses.hpp"
#include "otta/model.hpp"

namespace otta {

struct SgdConfig {
  double learning_rate = 0.005;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

void validate(const SgdConfig& cfg);

/// Velocity buffers, one per parameter handle, lazily initialized to zeros.
struct SgdState {
  std::vector<Tensor> velocity;
};

/// v <- momentum * v + g + weight_decay * p;  p <- p - lr * v.
void sgd_step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
              const SgdConfig& cfg, SgdState& state);

struct AdaptConfig {
  LossKind loss = LossKind::Comm;
  SelectMode selector = SelectMode::AffineOnly;
  SgdConfig sgd{};
  Index batch_size = 128;
  StatsMode stats = StatsMode::EvalBatch;  // batch or running
  bool record_entropy_trace = false;
  std::uint64_t seed = 0;
};

void validate(const AdaptConfig& cfg);

struct BatchMetrics {
  Index batch_index = 0;
  Index n = 0;
  double top1_error = 0.0;
  double mean_entropy = 0.0;
  double mean_cos_pred = 0.0;                      // mean maximally-aligned cosine
  double loss_value = std::numeric_limits<double>::quiet_NaN();
};

struct RunReport {
  std::vector<BatchMetrics> per_batch;
  /// Total errors / total samples; empty when the stream had no batches.
  std::optional<double> cumulative_top1_error;
  long clamp_warnings = 0;  // comm rows where every cosine was clamped
  Index dropped_tail = 0;
  std::vector<double> entropy_trace;  // per-batch mean entropy when recorded
};

/// Metrics are computed from the same forward pass that feeds the loss, and
/// before the parameter update: what the stream is scored on is the model's
/// prediction at arrival time.
BatchMetrics adapt_batch(Model& model, const StreamBatch& batch, const AdaptConfig& cfg,
                         SgdState& state, long* clamp_warnings = nullptr);

/// Single-pass online adaptation over a stream; each batch is consumed
/// exactly once and never revisited.
RunReport run_stream(Model& model, Stream& stream, const AdaptConfig& cfg);

/// Supervised source training with cross-entropy; running statistics are
/// populated with momentum 0.1. Deterministic per seed.
Model train_source(Model model, const Dataset& train, int epochs, const SgdConfig& sgd,
                   Index batch_size, std::uint64_t seed);

/// Top-1 error of a frozen model over a dataset, batched in order with no
/// mutation. Under batch statistics, a trailing batch of 1 is dropped.
double evaluate_frozen(const Model& model, const Dataset& data, StatsMode stats,
                       Index batch_size = 128);

/// Report CSV: `batch_idx,n,top1_err,mean_entropy,mean_cos_pred,loss_value,cum_err`
/// with a trailing summary row at batch_idx = -1; reals carry 9 significant
/// digits.
std::string report_to_csv(const RunReport& report);
void write_report_csv(const RunReport& report, const std::string& path);

}  // namespace otta
