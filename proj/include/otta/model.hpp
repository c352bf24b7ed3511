#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "otta/autodiff.hpp"
#include "otta/tensor.hpp"

namespace otta {

/// Which statistics a normalization layer consumes during a forward pass.
///  - Train: current batch statistics; running statistics updated (momentum 0.1).
///  - EvalRunning: stored running statistics, nothing mutated.
///  - EvalBatch: current batch statistics, running statistics untouched.
enum class StatsMode { Train, EvalRunning, EvalBatch };

/// Parameter subsets exposed to the optimizer.
enum class SelectMode { AffineOnly, FeatureExtractor, All };

const char* to_string(StatsMode m);
const char* to_string(SelectMode m);
SelectMode select_mode_from_string(const std::string& s);

struct DenseLayer {
  Tensor W;  // [out, in]
  Tensor b;  // [1, out]
};

/// Batch normalization over the batch axis, per feature channel, with
/// learnable affine (gamma, beta).
struct NormLayer {
  Tensor gamma;         // [1, D]
  Tensor beta;          // [1, D]
  Tensor running_mean;  // [1, D]
  Tensor running_var;   // [1, D], entries >= 0
  double epsilon = 1e-10;
};

struct ReluLayer {};

using Layer = std::variant<DenseLayer, NormLayer, ReluLayer>;

struct ClassifierHead {
  Tensor omega;                // [C, D]; no row may be (near) zero
  std::optional<Tensor> beta;  // [1, C] when bias is enabled
};

struct ModelSpec {
  Index input_dim = 0;
  std::vector<Index> hidden;  // widths of the dense+norm+relu blocks; last = D
  Index classes = 0;
  bool bias_enabled = false;
  std::uint64_t seed = 0;
};

/// Named mutable handle onto one parameter tensor of a live model.
struct ParamRef {
  Tensor* param = nullptr;
  std::string name;
};

struct ModelForward {
  Var features;                 // [N, D]
  Var logits;                   // [N, C]
  Var omega;                    // head weights as recorded on the tape
  std::vector<Var> param_vars;  // aligned with select_params() order
};

/// h = g . f: dense feature extractor with batch-norm affine parameters and
/// a linear classifier head.
class Model {
 public:
  Model() = default;

  /// Deterministic initialization: dense weights uniform in
  /// +-sqrt(6/(fan_in+fan_out)), biases zero, gamma 1, beta 0,
  /// running mean 0 / var 1. Requires at least one hidden block (and so at
  /// least one norm layer).
  static Model init(const ModelSpec& spec);

  /// Assembles a model from explicit parts (e.g. a head-only classifier);
  /// validates the result.
  static Model assemble(ModelSpec spec, std::vector<Layer> layers, ClassifierHead head);

  const ModelSpec& spec() const { return spec_; }
  Index feature_dim() const { return spec_.hidden.empty() ? spec_.input_dim : spec_.hidden.back(); }
  Index classes() const { return spec_.classes; }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const ClassifierHead& head() const { return head_; }
  ClassifierHead& head() { return head_; }

  /// Records the full forward pass on the tape. Parameters selected by
  /// `selected` become differentiable leaves, everything else constants.
  /// StatsMode::Train additionally folds the batch statistics into the
  /// running statistics, so it mutates the model.
  ModelForward forward_graph(Tape& tape, const Tensor& x, StatsMode stats, SelectMode selected);

  /// Evaluation-only forward; returns (features, logits) values.
  std::pair<Tensor, Tensor> forward_eval(const Tensor& x, StatsMode stats) const;

  /// Ordered parameter handles: layer order, gamma before beta within a norm
  /// layer, W before b within a dense layer, head last (All mode only).
  std::vector<ParamRef> select_params(SelectMode mode);

  /// Enforces the head invariant (no near-zero omega row); call after any
  /// update that can touch the head.
  void check_head() const;

  /// Full structural validation: shape chaining, stats widths, invariants.
  void validate() const;

  bool bit_equal(const Model& other) const;

 private:
  ModelSpec spec_;
  std::vector<Layer> layers_;
  ClassifierHead head_;
};

/// Versioned JSON checkpoint; reals carry 17 significant digits so the
/// round trip is bit-exact.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

inline constexpr const char* kCheckpointVersion = "1";
inline constexpr double kRunningStatMomentum = 0.1;

}  // namespace otta
