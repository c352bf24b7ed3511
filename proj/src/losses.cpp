#include "otta/losses.hpp"

#include <cmath>
#include <sstream>

namespace otta {

namespace {

// Probability floor for log(p) inside entropy-style sums. Multiplying by
// p afterwards restores the 0*log(0) = 0 convention exactly, since the
// clamp only fires when p underflows to zero.
constexpr double kLogFloor = 1e-300;

void require_logits(const Tensor& logits, const char* op) {
  if (logits.rank() != 2 || logits.rows() < 1 || logits.cols() < 1) {
    throw std::invalid_argument(std::string(op) + ": logits must be a non-empty [N,C] matrix, got " +
                                logits.shape_str());
  }
}

void check_feature_rows(const Tensor& z) {
  for (Index i = 0; i < z.rows(); ++i) {
    if (z.mat().row(i).norm() < kDegenerateRowNorm) {
      throw NumericError("degenerate feature row at sample index " + std::to_string(i));
    }
  }
}

void check_weight_rows(const Tensor& omega) {
  for (Index c = 0; c < omega.rows(); ++c) {
    if (omega.mat().row(c).norm() < kDegenerateRowNorm) {
      throw std::invalid_argument("omega row " + std::to_string(c) + " is (near) zero");
    }
  }
}

Tensor onehot_rows(const std::vector<Index>& idx, Index cols) {
  RowMatrix m = RowMatrix::Zero(static_cast<Index>(idx.size()), cols);
  for (Index i = 0; i < m.rows(); ++i) m(i, idx[static_cast<size_t>(i)]) = 1.0;
  return Tensor::from_matrix(m);
}

long count_all_clamped_rows(const Tensor& cos) {
  long n = 0;
  for (Index i = 0; i < cos.rows(); ++i) {
    if ((cos.mat().row(i).array() <= kCosineClampEps).all()) ++n;
  }
  return n;
}

LossValue evaluate(const LossTerms& terms) {
  LossValue v;
  v.value = terms.total.value().value();
  v.per_sample = terms.per_sample.value().flat();
  v.clamped_rows = terms.clamped_rows;
  return v;
}

}  // namespace

const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::Em: return "em";
    case LossKind::Pl: return "pl";
    case LossKind::Com: return "com";
    case LossKind::Comm: return "comm";
    case LossKind::None: return "none";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "em") return LossKind::Em;
  if (s == "pl") return LossKind::Pl;
  if (s == "com") return LossKind::Com;
  if (s == "comm") return LossKind::Comm;
  if (s == "none") return LossKind::None;
  throw std::invalid_argument("unknown loss kind '" + s + "' (expected em|pl|com|comm|none)");
}

// --------------------------------------------------------------------------
// Plain forms
// --------------------------------------------------------------------------

Tensor softmax_probs(const Tensor& logits) {
  require_logits(logits, "softmax_probs");
  return softmax_along(logits, 1);
}

Eigen::VectorXd entropy(const Tensor& probs) {
  require_logits(probs, "entropy");
  const auto p = probs.mat();
  Eigen::VectorXd h(p.rows());
  for (Index i = 0; i < p.rows(); ++i) {
    double sum = 0.0, acc = 0.0;
    for (Index c = 0; c < p.cols(); ++c) {
      const double v = p(i, c);
      if (v < 0.0) {
        throw std::invalid_argument("entropy: negative probability at (" + std::to_string(i) + "," +
                                    std::to_string(c) + ")");
      }
      sum += v;
      if (v > 0.0) acc -= v * std::log(v);
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument("entropy: row " + std::to_string(i) + " sums to " +
                                  std::to_string(sum) + ", not 1");
    }
    h[i] = acc;
  }
  return h;
}

CosineMatrix cosine_matrix(const Tensor& z, const Tensor& omega) {
  Tape tape;
  Var cosv = cosine_matrix_graph(tape.constant(z), tape.constant(omega));
  return CosineMatrix{cosv.value()};
}

std::vector<Index> predicted_class(const CosineMatrix& cos) {
  return max_along(cos.values, 1).indices;
}

LossValue loss_em(const Tensor& logits) {
  Tape tape;
  return evaluate(loss_em_graph(tape.constant(logits)));
}

LossValue loss_pl(const Tensor& logits) {
  Tape tape;
  return evaluate(loss_pl_graph(tape.constant(logits)));
}

LossValue loss_com(const Tensor& z, const Tensor& omega) {
  Tape tape;
  return evaluate(loss_com_graph(tape.constant(z), tape.constant(omega)));
}

LossValue loss_comm(const Tensor& z, const Tensor& omega) {
  Tape tape;
  return evaluate(loss_comm_graph(tape.constant(z), tape.constant(omega)));
}

// --------------------------------------------------------------------------
// Tape-recorded forms
// --------------------------------------------------------------------------

Var softmax_probs_graph(const Var& logits) {
  require_logits(logits.value(), "softmax_probs");
  return softmax_along(logits, 1);
}

Var entropy_rows_graph(const Var& probs) {
  Var lg = log(clamp_min(probs, kLogFloor));
  return scale(sum_along(mul(probs, lg), 1), -1.0);
}

Var cosine_matrix_graph(const Var& z, const Var& omega) {
  const Tensor& zv = z.value();
  const Tensor& wv = omega.value();
  if (zv.rank() != 2 || wv.rank() != 2 || zv.cols() != wv.cols()) {
    throw std::invalid_argument("cosine_matrix: expected [N,D] features and [C,D] weights, got " +
                                zv.shape_str() + " and " + wv.shape_str());
  }
  check_feature_rows(zv);
  check_weight_rows(wv);
  Var dots = matmul(z, omega, false, true);                          // [N,C]
  Var inv_zn = exp(scale(log(l2_norm_along(z, 1)), -1.0));           // [N,1]
  Var inv_wn = exp(scale(log(l2_norm_along(omega, 1)), -1.0));       // [C,1] -> used transposed
  // [N,C] * [N,1] * [1,C]
  Var wn_row = matmul(inv_zn, inv_wn, false, true);                  // outer product [N,C]
  return mul(dots, wn_row);
}

LossTerms loss_em_graph(const Var& logits) {
  Var p = softmax_probs_graph(logits);
  LossTerms t;
  t.per_sample = entropy_rows_graph(p);
  t.total = mean_all(t.per_sample);
  return t;
}

LossTerms loss_pl_graph(const Var& logits) {
  require_logits(logits.value(), "loss_pl");
  // Hard label: argmax of logits, constant under differentiation.
  std::vector<Index> label = max_along(logits.value(), 1).indices;
  Tensor mask = onehot_rows(label, logits.value().cols());
  Var p = softmax_probs_graph(logits);
  Var picked = sum_along(mul(p, logits.tape()->constant(mask)), 1);  // [N,1], >= 1/C
  LossTerms t;
  t.per_sample = scale(log(picked), -1.0);
  t.total = mean_all(t.per_sample);
  t.pred_class = std::move(label);
  return t;
}

LossTerms loss_com_graph(const Var& z, const Var& omega) {
  Var cos = cosine_matrix_graph(z, omega);
  MaxAlongVar mx = max_along(cos, 1);
  LossTerms t;
  t.per_sample = arccos(mx.values);
  t.total = mean_all(t.per_sample);
  t.pred_class = std::move(mx.indices);
  return t;
}

LossTerms loss_comm_graph(const Var& z, const Var& omega) {
  Var cos = cosine_matrix_graph(z, omega);
  // The predicted class comes from the unclamped cosines.
  std::vector<Index> pred = max_along(cos.value(), 1).indices;
  Tensor mask = onehot_rows(pred, cos.value().cols());
  Var clamped = clamp_min(cos, kCosineClampEps);
  Var num = sum_along(mul(clamped, cos.tape()->constant(mask)), 1);  // [N,1]
  Var den = sum_along(clamped, 1);                                   // [N,1]
  LossTerms t;
  t.per_sample = sub(log(den), log(num));  // == -log(num/den) >= 0
  t.total = mean_all(t.per_sample);
  t.pred_class = std::move(pred);
  t.clamped_rows = count_all_clamped_rows(cos.value());
  return t;
}

}  // namespace otta
