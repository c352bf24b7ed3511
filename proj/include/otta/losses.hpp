#pragma once

#include <vector>

#include "otta/autodiff.hpp"
#include "otta/tensor.hpp"

namespace otta {

enum class LossKind { Em, Pl, Com, Comm, None };

const char* to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

/// Feature-weight cosine matrix: entry (i, c) is the cosine of the angle
/// between feature row z_i and class weight row omega_c. Entries lie in
/// [-1, 1] (up to rounding) and are invariant under positive rescaling of
/// any feature or weight row.
struct CosineMatrix {
  Tensor values;  // [N, C]
};

struct LossValue {
  double value = 0.0;
  Eigen::VectorXd per_sample;  // mean(per_sample) == value
  long clamped_rows = 0;       // comm only: rows with every cosine <= epsilon
};

/// Cosines below this are clamped (with zero gradient) before the CoMM
/// log-ratio; the ratio is undefined for non-positive entries.
inline constexpr double kCosineClampEps = 1e-6;
/// Feature/weight rows with norm below this are rejected as degenerate.
inline constexpr double kDegenerateRowNorm = 1e-9;

// --------------------------------------------------------------------------
// Plain evaluation (metrics, tests). Gradients go through the *_graph forms.
// --------------------------------------------------------------------------

/// Row softmax with max-subtraction; rows sum to 1 within 1e-12.
Tensor softmax_probs(const Tensor& logits);

/// Shannon entropy per row, natural log, 0*log(0) = 0. Requires rows that
/// sum to 1 within 1e-6 with non-negative entries.
Eigen::VectorXd entropy(const Tensor& probs);

CosineMatrix cosine_matrix(const Tensor& z, const Tensor& omega);

/// Maximally aligned class per sample: argmax over cosine, ties to the
/// lowest index.
std::vector<Index> predicted_class(const CosineMatrix& cos);

LossValue loss_em(const Tensor& logits);
LossValue loss_pl(const Tensor& logits);
LossValue loss_com(const Tensor& z, const Tensor& omega);
LossValue loss_comm(const Tensor& z, const Tensor& omega);

// --------------------------------------------------------------------------
// Tape-recorded forms used by the adaptation loop.
// --------------------------------------------------------------------------

struct LossTerms {
  Var total;                       // scalar mean over the batch
  Var per_sample;                  // [N, 1]
  std::vector<Index> pred_class;   // label used by pl / com / comm
  long clamped_rows = 0;
};

Var softmax_probs_graph(const Var& logits);
/// Per-sample entropies [N,1] of a probability matrix.
Var entropy_rows_graph(const Var& probs);
/// Cosine matrix [N,C]; validates degenerate rows against the *values* of z
/// and omega at recording time.
Var cosine_matrix_graph(const Var& z, const Var& omega);

LossTerms loss_em_graph(const Var& logits);
LossTerms loss_pl_graph(const Var& logits);
LossTerms loss_com_graph(const Var& z, const Var& omega);
LossTerms loss_comm_graph(const Var& z, const Var& omega);

}  // namespace otta
