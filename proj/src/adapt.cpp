#include "otta/adapt.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "otta/format.hpp"
#include "otta/rng.hpp"

namespace otta {

void validate(const SgdConfig& cfg) {
  if (cfg.learning_rate < 0.0) throw std::invalid_argument("sgd: learning rate must be >= 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
    throw std::invalid_argument("sgd: momentum must be in [0,1)");
  }
  if (cfg.weight_decay < 0.0) throw std::invalid_argument("sgd: weight decay must be >= 0");
}

void validate(const AdaptConfig& cfg) {
  validate(cfg.sgd);
  if (cfg.batch_size < 1) throw std::invalid_argument("adapt: batch_size must be >= 1");
  if (cfg.stats == StatsMode::Train) {
    throw std::invalid_argument("adapt: stats mode must be batch or running");
  }
  if (cfg.stats == StatsMode::EvalBatch && cfg.batch_size < 2) {
    throw std::invalid_argument("adapt: batch statistics need batch_size >= 2");
  }
}

void sgd_step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
              const SgdConfig& cfg, SgdState& state) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("sgd_step: " + std::to_string(params.size()) + " params vs " +
                                std::to_string(grads.size()) + " grads");
  }
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const ParamRef& p : params) state.velocity.push_back(Tensor::zeros(p.param->shape()));
  }
  if (state.velocity.size() != params.size()) {
    throw std::invalid_argument("sgd_step: optimizer state does not match parameter list");
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].param;
    const Tensor& g = grads[i];
    if (!p.same_shape(g)) {
      throw std::invalid_argument("sgd_step: gradient shape " + g.shape_str() +
                                  " does not match parameter " + params[i].name);
    }
    if (!g.flat().allFinite()) {
      throw NumericError("non-finite gradient for parameter " + params[i].name);
    }
    Tensor& v = state.velocity[i];
    Eigen::VectorXd step = g.flat();
    if (cfg.weight_decay != 0.0) step += cfg.weight_decay * p.flat();
    v.flat() = cfg.momentum * v.flat() + step;
    p.flat() -= cfg.learning_rate * v.flat();
    if (!p.flat().allFinite()) {
      throw NumericError("parameter " + params[i].name + " became non-finite");
    }
  }
}

namespace {

std::vector<Index> argmax_rows(const Tensor& m) { return max_along(m, 1).indices; }

double fraction_wrong(const std::vector<Index>& pred, const std::vector<int>& truth) {
  long wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (static_cast<int>(pred[i]) != truth[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

LossTerms build_loss(LossKind kind, const ModelForward& fwd) {
  switch (kind) {
    case LossKind::Em: return loss_em_graph(fwd.logits);
    case LossKind::Pl: return loss_pl_graph(fwd.logits);
    case LossKind::Com: return loss_com_graph(fwd.features, fwd.omega);
    case LossKind::Comm: return loss_comm_graph(fwd.features, fwd.omega);
    case LossKind::None: break;
  }
  throw std::invalid_argument("build_loss: no loss to build");
}

}  // namespace

BatchMetrics adapt_batch(Model& model, const StreamBatch& batch, const AdaptConfig& cfg,
                         SgdState& state, long* clamp_warnings) {
  validate(cfg);
  if (batch.size() < 1) throw std::invalid_argument("adapt_batch: empty batch");

  Tape tape;
  ModelForward fwd = model.forward_graph(tape, batch.x(), cfg.stats, cfg.selector);

  // Score this batch from the same forward pass, before any update.
  const Tensor& logits = fwd.logits.value();
  const Tensor probs = softmax_probs(logits);
  const CosineMatrix cos = cosine_matrix(fwd.features.value(), model.head().omega);

  BatchMetrics m;
  m.n = batch.size();
  m.top1_error = fraction_wrong(argmax_rows(logits), batch.labels(metric_access_t{}));
  m.mean_entropy = entropy(probs).mean();
  m.mean_cos_pred = max_along(cos.values, 1).values.flat().mean();

  if (cfg.loss != LossKind::None) {
    LossTerms loss = build_loss(cfg.loss, fwd);
    if (!std::isfinite(loss.total.value().value())) {
      throw NumericError("non-finite loss value");
    }
    m.loss_value = loss.total.value().value();
    if (clamp_warnings) *clamp_warnings += loss.clamped_rows;

    Gradients grads = backward(loss.total);
    std::vector<ParamRef> refs = model.select_params(cfg.selector);
    std::vector<Tensor> gs;
    gs.reserve(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) gs.push_back(grads.at(fwd.param_vars[i]));
    sgd_step(refs, gs, cfg.sgd, state);
    if (cfg.selector == SelectMode::All) model.check_head();
  }
  return m;
}

RunReport run_stream(Model& model, Stream& stream, const AdaptConfig& cfg) {
  validate(cfg);
  RunReport report;
  report.dropped_tail = stream.dropped_tail();

  SgdState state;
  long total_wrong = 0;
  long total_n = 0;
  Index batch_index = 0;
  while (const StreamBatch* batch = stream.next()) {
    BatchMetrics m;
    try {
      m = adapt_batch(model, *batch, cfg, state, &report.clamp_warnings);
    } catch (const NumericError& e) {
      throw NumericError("batch " + std::to_string(batch_index) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("batch " + std::to_string(batch_index) + ": " + e.what());
    }
    m.batch_index = batch_index++;
    total_wrong += std::lround(m.top1_error * static_cast<double>(m.n));
    total_n += m.n;
    if (cfg.record_entropy_trace) report.entropy_trace.push_back(m.mean_entropy);
    report.per_batch.push_back(m);
  }

  if (total_n > 0) {
    report.cumulative_top1_error =
        static_cast<double>(total_wrong) / static_cast<double>(total_n);
  }
  return report;
}

Model train_source(Model model, const Dataset& train, int epochs, const SgdConfig& sgd_cfg,
                   Index batch_size, std::uint64_t seed) {
  validate(sgd_cfg);
  if (train.size() == 0) throw std::invalid_argument("train_source: empty dataset");
  if (batch_size < 2) throw std::invalid_argument("train_source: batch_size must be >= 2");
  if (epochs < 0) throw std::invalid_argument("train_source: epochs must be >= 0");

  std::vector<ParamRef> refs = model.select_params(SelectMode::All);
  SgdState state;

  std::vector<Index> order(static_cast<size_t>(train.size()));
  std::iota(order.begin(), order.end(), Index{0});

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(epoch) + 1);
    rng.shuffle(order);
    Index batch_index = 0;
    for (Index start = 0; start + 1 < train.size(); start += batch_size, ++batch_index) {
      const Index count = std::min(batch_size, train.size() - start);
      if (count < 2) break;  // batch statistics need two samples
      RowMatrix x(count, train.dim());
      std::vector<Index> labels(static_cast<size_t>(count));
      for (Index i = 0; i < count; ++i) {
        const Index src = order[static_cast<size_t>(start + i)];
        x.row(i) = train.x.mat().row(src);
        labels[static_cast<size_t>(i)] = train.y[static_cast<size_t>(src)];
      }

      try {
        Tape tape;
        ModelForward fwd =
            model.forward_graph(tape, Tensor::from_matrix(x), StatsMode::Train, SelectMode::All);
        // Cross-entropy against the true labels.
        RowMatrix onehot = RowMatrix::Zero(count, model.classes());
        for (Index i = 0; i < count; ++i) onehot(i, labels[static_cast<size_t>(i)]) = 1.0;
        Var p = softmax_probs_graph(fwd.logits);
        Var picked = sum_along(mul(p, tape.constant(Tensor::from_matrix(onehot))), 1);
        Var loss = mean_all(scale(log(clamp_min(picked, 1e-300)), -1.0));
        if (!std::isfinite(loss.value().value())) throw NumericError("non-finite loss value");

        Gradients grads = backward(loss);
        std::vector<Tensor> gs;
        gs.reserve(refs.size());
        for (std::size_t i = 0; i < refs.size(); ++i) gs.push_back(grads.at(fwd.param_vars[i]));
        sgd_step(refs, gs, sgd_cfg, state);
        model.check_head();
      } catch (const NumericError& e) {
        throw NumericError("source training diverged at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index) + ": " + e.what());
      }
    }
  }
  return model;
}

double evaluate_frozen(const Model& model, const Dataset& data, StatsMode stats,
                       Index batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_frozen: empty dataset");
  if (stats == StatsMode::Train) {
    throw std::invalid_argument("evaluate_frozen: stats mode must be batch or running");
  }
  if (batch_size < 1) throw std::invalid_argument("evaluate_frozen: batch_size must be >= 1");

  long wrong = 0;
  long counted = 0;
  for (Index start = 0; start < data.size(); start += batch_size) {
    const Index count = std::min(batch_size, data.size() - start);
    if (stats == StatsMode::EvalBatch && count < 2) break;  // variance undefined
    RowMatrix x(count, data.dim());
    for (Index i = 0; i < count; ++i) x.row(i) = data.x.mat().row(start + i);
    auto [features, logits] = model.forward_eval(Tensor::from_matrix(x), stats);
    const std::vector<Index> pred = argmax_rows(logits);
    for (Index i = 0; i < count; ++i) {
      if (static_cast<int>(pred[static_cast<size_t>(i)]) !=
          data.y[static_cast<size_t>(start + i)]) {
        ++wrong;
      }
    }
    counted += count;
  }
  if (counted == 0) throw std::invalid_argument("evaluate_frozen: no scorable batches");
  return static_cast<double>(wrong) / static_cast<double>(counted);
}

std::string report_to_csv(const RunReport& report) {
  std::string out = "batch_idx,n,top1_err,mean_entropy,mean_cos_pred,loss_value,cum_err\n";
  long total_wrong = 0, total_n = 0;
  double entropy_sum = 0.0, cos_sum = 0.0, loss_sum = 0.0;
  long loss_batches = 0;
  for (const BatchMetrics& m : report.per_batch) {
    total_wrong += std::lround(m.top1_error * static_cast<double>(m.n));
    total_n += m.n;
    entropy_sum += m.mean_entropy * static_cast<double>(m.n);
    cos_sum += m.mean_cos_pred * static_cast<double>(m.n);
    if (std::isfinite(m.loss_value)) {
      loss_sum += m.loss_value;
      ++loss_batches;
    }
    const double cum = static_cast<double>(total_wrong) / static_cast<double>(total_n);
    out += std::to_string(m.batch_index) + ',' + std::to_string(m.n) + ',' +
           fmt_g9(m.top1_error) + ',' + fmt_g9(m.mean_entropy) + ',' + fmt_g9(m.mean_cos_pred) +
           ',' + fmt_g9(m.loss_value) + ',' + fmt_g9(cum) + '\n';
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double dn = static_cast<double>(total_n);
  out += "-1," + std::to_string(total_n) + ',' +
         fmt_g9(total_n ? static_cast<double>(total_wrong) / dn : nan) + ',' +
         fmt_g9(total_n ? entropy_sum / dn : nan) + ',' + fmt_g9(total_n ? cos_sum / dn : nan) +
         ',' + fmt_g9(loss_batches ? loss_sum / static_cast<double>(loss_batches) : nan) + ',' +
         fmt_g9(total_n ? static_cast<double>(total_wrong) / dn : nan) + '\n';
  return out;
}

void write_report_csv(const RunReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot write report CSV: " + path);
  f << report_to_csv(report);
}

}  // namespace otta
