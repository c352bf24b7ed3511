#include "otta/model.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "otta/format.hpp"
#include "otta/rng.hpp"

namespace otta {

const char* to_string(StatsMode m) {
  switch (m) {
    case StatsMode::Train: return "train";
    case StatsMode::EvalRunning: return "running";
    case StatsMode::EvalBatch: return "batch";
  }
  return "?";
}

const char* to_string(SelectMode m) {
  switch (m) {
    case SelectMode::AffineOnly: return "affine";
    case SelectMode::FeatureExtractor: return "feat";
    case SelectMode::All: return "all";
  }
  return "?";
}

SelectMode select_mode_from_string(const std::string& s) {
  if (s == "affine") return SelectMode::AffineOnly;
  if (s == "feat") return SelectMode::FeatureExtractor;
  if (s == "all") return SelectMode::All;
  throw std::invalid_argument("unknown parameter selection '" + s + "' (expected affine|feat|all)");
}

namespace {

Tensor glorot_uniform(Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Eigen::VectorXd d(rows * cols);
  for (Index i = 0; i < d.size(); ++i) d[i] = rng.uniform(-bound, bound);
  return Tensor(Shape{rows, cols}, std::move(d));
}

}  // namespace

Model Model::init(const ModelSpec& spec) {
  if (spec.input_dim <= 0 || spec.classes <= 0) {
    throw std::invalid_argument("model spec: input_dim and classes must be positive");
  }
  for (Index w : spec.hidden) {
    if (w <= 0) throw std::invalid_argument("model spec: hidden widths must be positive");
  }
  if (spec.hidden.empty() && spec.input_dim <= 0) {
    throw std::invalid_argument("model spec: no feature width");
  }

  if (spec.hidden.empty()) {
    throw std::invalid_argument("model spec: at least one hidden block (norm layer) required");
  }

  Model m;
  m.spec_ = spec;
  Rng rng(spec.seed);
  Index cur = spec.input_dim;
  for (Index w : spec.hidden) {
    DenseLayer dense;
    dense.W = glorot_uniform(w, cur, rng);
    dense.b = Tensor::zeros(Shape{1, w});
    m.layers_.emplace_back(std::move(dense));
    NormLayer norm;
    norm.gamma = Tensor::full(Shape{1, w}, 1.0);
    norm.beta = Tensor::zeros(Shape{1, w});
    norm.running_mean = Tensor::zeros(Shape{1, w});
    norm.running_var = Tensor::full(Shape{1, w}, 1.0);
    m.layers_.emplace_back(std::move(norm));
    m.layers_.emplace_back(ReluLayer{});
    cur = w;
  }
  m.head_.omega = glorot_uniform(spec.classes, cur, rng);
  if (spec.bias_enabled) m.head_.beta = Tensor::zeros(Shape{1, spec.classes});
  m.validate();
  return m;
}

Model Model::assemble(ModelSpec spec, std::vector<Layer> layers, ClassifierHead head) {
  Model m;
  m.spec_ = std::move(spec);
  m.layers_ = std::move(layers);
  m.head_ = std::move(head);
  m.validate();
  return m;
}

ModelForward Model::forward_graph(Tape& tape, const Tensor& x, StatsMode stats,
                                  SelectMode selected) {
  if (x.rank() != 2 || x.cols() != spec_.input_dim) {
    throw std::invalid_argument("forward: input must be [N," + std::to_string(spec_.input_dim) +
                                "], got " + x.shape_str());
  }
  const Index n = x.rows();
  if (n < 1) throw std::invalid_argument("forward: empty batch");
  if ((stats == StatsMode::Train || stats == StatsMode::EvalBatch) && n < 2) {
    throw std::invalid_argument("forward: batch statistics need N >= 2, got N = 1");
  }

  std::vector<ParamRef> refs = select_params(selected);
  std::unordered_map<const Tensor*, std::size_t> selected_index;
  for (std::size_t i = 0; i < refs.size(); ++i) selected_index.emplace(refs[i].param, i);

  ModelForward out;
  out.param_vars.resize(refs.size());
  auto wrap = [&](Tensor& t) -> Var {
    auto it = selected_index.find(&t);
    if (it == selected_index.end()) return tape.constant(t);
    Var v = tape.leaf(t);
    out.param_vars[it->second] = v;
    return v;
  };

  Var h = tape.constant(x);
  for (Layer& layer : layers_) {
    if (auto* dense = std::get_if<DenseLayer>(&layer)) {
      h = add(matmul(h, wrap(dense->W), false, true), wrap(dense->b));
    } else if (auto* norm = std::get_if<NormLayer>(&layer)) {
      Var mu, var, xc;
      if (stats == StatsMode::EvalRunning) {
        mu = tape.constant(norm->running_mean);
        xc = sub(h, mu);
        var = tape.constant(norm->running_var);
      } else {
        mu = mean_along(h, 0);
        xc = sub(h, mu);
        var = mean_along(mul(xc, xc), 0);  // population variance
        if (stats == StatsMode::Train) {
          // Fold current batch statistics into the running estimates; the
          // running variance uses the unbiased form.
          const double m = kRunningStatMomentum;
          const double bessel = static_cast<double>(n) / static_cast<double>(n - 1);
          norm->running_mean =
              add(scale(norm->running_mean, 1.0 - m), scale(mu.value(), m));
          norm->running_var =
              add(scale(norm->running_var, 1.0 - m), scale(var.value(), m * bessel));
        }
      }
      Var eps = tape.constant(Tensor::full(var.value().shape(), norm->epsilon));
      Var rstd = exp(scale(log(add(var, eps)), -0.5));
      Var xhat = mul(xc, rstd);
      h = add(mul(xhat, wrap(norm->gamma)), wrap(norm->beta));
    } else {
      h = relu(h);
    }
  }

  out.features = h;
  out.omega = wrap(head_.omega);
  out.logits = matmul(out.features, out.omega, false, true);
  if (head_.beta) out.logits = add(out.logits, wrap(*head_.beta));
  return out;
}

std::pair<Tensor, Tensor> Model::forward_eval(const Tensor& x, StatsMode stats) const {
  if (stats == StatsMode::Train) {
    throw std::invalid_argument("forward_eval: Train mode mutates running statistics");
  }
  Tape tape;
  // Eval modes never write back; recording constants only.
  ModelForward f = const_cast<Model*>(this)->forward_graph(tape, x, stats, SelectMode::AffineOnly);
  return {f.features.value(), f.logits.value()};
}

std::vector<ParamRef> Model::select_params(SelectMode mode) {
  std::vector<ParamRef> refs;
  int li = 0;
  for (Layer& layer : layers_) {
    const std::string prefix = "layer" + std::to_string(li++);
    if (auto* dense = std::get_if<DenseLayer>(&layer)) {
      if (mode != SelectMode::AffineOnly) {
        refs.push_back({&dense->W, prefix + ".W"});
        refs.push_back({&dense->b, prefix + ".b"});
      }
    } else if (auto* norm = std::get_if<NormLayer>(&layer)) {
      refs.push_back({&norm->gamma, prefix + ".gamma"});
      refs.push_back({&norm->beta, prefix + ".beta"});
    }
  }
  if (mode == SelectMode::All) {
    refs.push_back({&head_.omega, "head.omega"});
    if (head_.beta) refs.push_back({&*head_.beta, "head.beta"});
  }
  return refs;
}

void Model::check_head() const {
  for (Index c = 0; c < head_.omega.rows(); ++c) {
    if (head_.omega.mat().row(c).norm() < 1e-9) {
      throw NumericError("head omega row " + std::to_string(c) + " collapsed to zero norm");
    }
  }
}

void Model::validate() const {
  Index cur = spec_.input_dim;
  for (const Layer& layer : layers_) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      if (dense->W.rank() != 2 || dense->W.cols() != cur) {
        throw std::invalid_argument("checkpoint: dense weight shape " + dense->W.shape_str() +
                                    " does not chain from width " + std::to_string(cur));
      }
      if (dense->b.rank() != 2 || dense->b.rows() != 1 || dense->b.cols() != dense->W.rows()) {
        throw std::invalid_argument("checkpoint: dense bias shape mismatch");
      }
      cur = dense->W.rows();
    } else if (const auto* norm = std::get_if<NormLayer>(&layer)) {
      for (const Tensor* t : {&norm->gamma, &norm->beta, &norm->running_mean, &norm->running_var}) {
        if (t->rank() != 2 || t->rows() != 1 || t->cols() != cur) {
          throw std::invalid_argument("checkpoint: norm parameter width mismatch at width " +
                                      std::to_string(cur));
        }
      }
      if ((norm->running_var.flat().array() < 0.0).any()) {
        throw std::invalid_argument("checkpoint: negative running variance");
      }
      if (norm->epsilon <= 0.0) throw std::invalid_argument("checkpoint: epsilon must be positive");
    }
  }
  if (cur != feature_dim()) {
    throw std::invalid_argument("checkpoint: layer chain ends at width " + std::to_string(cur) +
                                ", expected D = " + std::to_string(feature_dim()));
  }
  if (head_.omega.rank() != 2 || head_.omega.rows() != spec_.classes ||
      head_.omega.cols() != feature_dim()) {
    throw std::invalid_argument("checkpoint: head omega shape " + head_.omega.shape_str() +
                                " does not match C x D");
  }
  for (Index c = 0; c < head_.omega.rows(); ++c) {
    if (head_.omega.mat().row(c).norm() < 1e-9) {
      throw std::invalid_argument("checkpoint: head omega row " + std::to_string(c) +
                                  " violates the non-zero invariant");
    }
  }
  if (spec_.bias_enabled != head_.beta.has_value()) {
    throw std::invalid_argument("checkpoint: bias_enabled flag does not match head");
  }
  if (head_.beta && (head_.beta->rank() != 2 || head_.beta->rows() != 1 ||
                     head_.beta->cols() != spec_.classes)) {
    throw std::invalid_argument("checkpoint: head bias shape mismatch");
  }
}

bool Model::bit_equal(const Model& other) const {
  if (spec_.input_dim != other.spec_.input_dim || spec_.hidden != other.spec_.hidden ||
      spec_.classes != other.spec_.classes || spec_.bias_enabled != other.spec_.bias_enabled) {
    return false;
  }
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& a = layers_[i];
    const Layer& b = other.layers_[i];
    if (a.index() != b.index()) return false;
    if (const auto* da = std::get_if<DenseLayer>(&a)) {
      const auto* db = std::get_if<DenseLayer>(&b);
      if (!da->W.bit_equal(db->W) || !da->b.bit_equal(db->b)) return false;
    } else if (const auto* na = std::get_if<NormLayer>(&a)) {
      const auto* nb = std::get_if<NormLayer>(&b);
      if (!na->gamma.bit_equal(nb->gamma) || !na->beta.bit_equal(nb->beta) ||
          !na->running_mean.bit_equal(nb->running_mean) ||
          !na->running_var.bit_equal(nb->running_var) || na->epsilon != nb->epsilon) {
        return false;
      }
    }
  }
  if (!head_.omega.bit_equal(other.head_.omega)) return false;
  if (head_.beta.has_value() != other.head_.beta.has_value()) return false;
  if (head_.beta && !head_.beta->bit_equal(*other.head_.beta)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

void append_vector(std::string& out, const Tensor& t) {
  out += '[';
  for (Index i = 0; i < t.size(); ++i) {
    if (i) out += ',';
    out += fmt_g17(t.flat()[i]);
  }
  out += ']';
}

void append_matrix(std::string& out, const Tensor& t) {
  out += '[';
  for (Index i = 0; i < t.rows(); ++i) {
    if (i) out += ',';
    out += '[';
    for (Index j = 0; j < t.cols(); ++j) {
      if (j) out += ',';
      out += fmt_g17(t(i, j));
    }
    out += ']';
  }
  out += ']';
}

Tensor vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw std::invalid_argument("checkpoint: " + what + " must be an array");
  Eigen::VectorXd d(static_cast<Index>(j.size()));
  Index i = 0;
  for (const auto& v : j) {
    if (!v.is_number()) throw std::invalid_argument("checkpoint: " + what + " has a non-numeric entry");
    d[i++] = v.get<double>();
  }
  return Tensor(Shape{1, static_cast<Index>(j.size())}, std::move(d));
}

Tensor matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw std::invalid_argument("checkpoint: " + what + " must be a matrix (array of arrays)");
  }
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j.front().size());
  Eigen::VectorXd d(rows * cols);
  Index k = 0;
  for (const auto& row : j) {
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw std::invalid_argument("checkpoint: ragged matrix in " + what);
    }
    for (const auto& v : row) {
      if (!v.is_number()) throw std::invalid_argument("checkpoint: " + what + " has a non-numeric entry");
      d[k++] = v.get<double>();
    }
  }
  return Tensor(Shape{rows, cols}, std::move(d));
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  const ModelSpec& spec = model.spec();
  std::string out;
  out.reserve(1 << 16);
  out += "{\"format_version\":\"";
  out += kCheckpointVersion;
  out += "\",\"dims\":{\"input\":" + std::to_string(spec.input_dim) + ",\"hidden\":[";
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(spec.hidden[i]);
  }
  out += "],\"D\":" + std::to_string(model.feature_dim()) +
         ",\"C\":" + std::to_string(spec.classes) + "}";
  out += std::string(",\"bias_enabled\":") + (spec.bias_enabled ? "true" : "false");
  out += ",\"layers\":[";
  bool first = true;
  for (const Layer& layer : model.layers()) {
    if (!first) out += ',';
    first = false;
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      out += "{\"type\":\"dense\",\"W\":";
      append_matrix(out, dense->W);
      out += ",\"b\":";
      append_vector(out, dense->b);
      out += '}';
    } else if (const auto* norm = std::get_if<NormLayer>(&layer)) {
      out += "{\"type\":\"norm\",\"gamma\":";
      append_vector(out, norm->gamma);
      out += ",\"beta_norm\":";
      append_vector(out, norm->beta);
      out += ",\"running_mean\":";
      append_vector(out, norm->running_mean);
      out += ",\"running_var\":";
      append_vector(out, norm->running_var);
      out += ",\"epsilon\":" + fmt_g17(norm->epsilon);
      out += '}';
    } else {
      out += "{\"type\":\"relu\"}";
    }
  }
  out += "],\"head\":{\"omega\":";
  append_matrix(out, model.head().omega);
  out += ",\"beta\":";
  if (model.head().beta) append_vector(out, *model.head().beta);
  else out += "null";
  out += "}}\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open checkpoint path for writing: " + path);
  f << out;
  if (!f) throw std::invalid_argument("failed writing checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed checkpoint " + path + ": " + e.what());
  }

  if (!j.contains("format_version") || !j["format_version"].is_string()) {
    throw std::invalid_argument("checkpoint: missing format_version");
  }
  const std::string version = j["format_version"].get<std::string>();
  if (version != kCheckpointVersion) {
    throw std::invalid_argument("checkpoint format_version mismatch: file has \"" + version +
                                "\", this build reads \"" + kCheckpointVersion + "\"");
  }

  try {
    const auto& dims = j.at("dims");
    ModelSpec spec;
    spec.input_dim = dims.at("input").get<Index>();
    for (const auto& h : dims.at("hidden")) spec.hidden.push_back(h.get<Index>());
    spec.classes = dims.at("C").get<Index>();
    spec.bias_enabled = j.at("bias_enabled").get<bool>();
    const Index d_file = dims.at("D").get<Index>();
    const Index d_spec = spec.hidden.empty() ? spec.input_dim : spec.hidden.back();
    if (d_file != d_spec) {
      throw std::invalid_argument("checkpoint: dims.D = " + std::to_string(d_file) +
                                  " does not match the layer widths");
    }

    std::vector<Layer> layers;
    for (const auto& jl : j.at("layers")) {
      const std::string type = jl.at("type").get<std::string>();
      if (type == "dense") {
        DenseLayer dense;
        dense.W = matrix_from_json(jl.at("W"), "W");
        dense.b = vector_from_json(jl.at("b"), "b");
        layers.emplace_back(std::move(dense));
      } else if (type == "norm") {
        NormLayer norm;
        norm.gamma = vector_from_json(jl.at("gamma"), "gamma");
        norm.beta = vector_from_json(jl.at("beta_norm"), "beta_norm");
        norm.running_mean = vector_from_json(jl.at("running_mean"), "running_mean");
        norm.running_var = vector_from_json(jl.at("running_var"), "running_var");
        norm.epsilon = jl.at("epsilon").get<double>();
        layers.emplace_back(std::move(norm));
      } else if (type == "relu") {
        layers.emplace_back(ReluLayer{});
      } else {
        throw std::invalid_argument("checkpoint: unknown layer type '" + type + "'");
      }
    }

    const auto& jhead = j.at("head");
    ClassifierHead head;
    head.omega = matrix_from_json(jhead.at("omega"), "omega");
    if (jhead.at("beta").is_null()) {
      if (spec.bias_enabled) throw std::invalid_argument("checkpoint: bias enabled but beta is null");
    } else {
      head.beta = vector_from_json(jhead.at("beta"), "beta");
    }
    return Model::assemble(std::move(spec), std::move(layers), std::move(head));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed checkpoint " + path + ": " + e.what());
  }
}

}  // namespace otta
