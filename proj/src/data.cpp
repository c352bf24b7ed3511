#include "otta/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "otta/format.hpp"
#include "otta/rng.hpp"

namespace otta {

const char* to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::GaussianNoise: return "gaussian-noise";
    case CorruptionKind::FeatureScale: return "feature-scale";
    case CorruptionKind::Rotation: return "rotation";
    case CorruptionKind::MeanShift: return "mean-shift";
    case CorruptionKind::FeatureDropout: return "feature-dropout";
  }
  return "?";
}

CorruptionKind corruption_kind_from_string(const std::string& s) {
  if (s == "gaussian-noise") return CorruptionKind::GaussianNoise;
  if (s == "feature-scale") return CorruptionKind::FeatureScale;
  if (s == "rotation") return CorruptionKind::Rotation;
  if (s == "mean-shift") return CorruptionKind::MeanShift;
  if (s == "feature-dropout") return CorruptionKind::FeatureDropout;
  throw std::invalid_argument("unknown corruption kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd random_unit_vector(Index dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  double norm = 0.0;
  do {
    for (Index i = 0; i < dim; ++i) v[i] = rng.normal();
    norm = v.norm();
  } while (norm < 1e-12);
  return v / norm;
}

std::vector<Eigen::VectorXd> separated_centroids(Index n_classes, Index dim, Rng& rng) {
  const double cos_limit = std::cos(kMinCentroidAngle);
  std::vector<Eigen::VectorXd> centroids;
  centroids.reserve(static_cast<size_t>(n_classes));
  constexpr int kMaxAttempts = 20000;
  int attempts = 0;
  while (static_cast<Index>(centroids.size()) < n_classes) {
    if (++attempts > kMaxAttempts) {
      throw std::invalid_argument(
          "infeasible centroid separation: cannot place " + std::to_string(n_classes) +
          " centroids at pairwise angle >= 45 degrees in dimension " + std::to_string(dim));
    }
    Eigen::VectorXd cand = random_unit_vector(dim, rng);
    bool ok = true;
    for (const auto& c : centroids) {
      if (cand.dot(c) > cos_limit) {
        ok = false;
        break;
      }
    }
    if (ok) centroids.push_back(std::move(cand));
  }
  return centroids;
}

}  // namespace

SplitDataset gen_blobs(const DatasetSpec& spec) {
  if (spec.n_classes < 2) throw std::invalid_argument("gen_blobs: need at least 2 classes");
  if (spec.samples_per_class < 1) throw std::invalid_argument("gen_blobs: samples_per_class >= 1");
  if (spec.feature_dim < 2) throw std::invalid_argument("gen_blobs: feature_dim >= 2");
  if (spec.cluster_spread < 0.0) throw std::invalid_argument("gen_blobs: spread must be >= 0");

  Rng rng(spec.seed);
  const auto centroids = separated_centroids(spec.n_classes, spec.feature_dim, rng);

  const Index n = spec.n_classes * spec.samples_per_class;
  RowMatrix x(n, spec.feature_dim);
  std::vector<int> y(static_cast<size_t>(n));
  Index row = 0;
  for (Index c = 0; c < spec.n_classes; ++c) {
    for (Index s = 0; s < spec.samples_per_class; ++s, ++row) {
      for (Index d = 0; d < spec.feature_dim; ++d) {
        x(row, d) = centroids[static_cast<size_t>(c)][d] + spec.cluster_spread * rng.normal();
      }
      y[static_cast<size_t>(row)] = static_cast<int>(c);
    }
  }

  Dataset all{Tensor::from_matrix(x), std::move(y), spec.n_classes};
  return split_dataset(all, 0.8, spec.seed);
}

SplitDataset split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (data.size() == 0) throw std::invalid_argument("split_dataset: empty dataset");
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw std::invalid_argument("split_dataset: fraction must be in (0,1)");
  }

  std::vector<std::vector<Index>> by_class(static_cast<size_t>(data.n_classes));
  for (Index i = 0; i < data.size(); ++i) {
    by_class[static_cast<size_t>(data.y[static_cast<size_t>(i)])].push_back(i);
  }

  Rng rng = Rng::derive(seed, 0x5117);
  std::vector<Index> train_rows, test_rows;
  for (auto& rows : by_class) {
    rng.shuffle(rows);
    const auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(rows.size())));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_train ? train_rows : test_rows).push_back(rows[i]);
    }
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  auto take = [&](const std::vector<Index>& rows) {
    RowMatrix x(static_cast<Index>(rows.size()), data.dim());
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Index>(i)) = data.x.mat().row(rows[i]);
      y[i] = data.y[static_cast<size_t>(rows[i])];
    }
    return Dataset{Tensor::from_matrix(x), std::move(y), data.n_classes};
  };
  return {take(train_rows), take(test_rows)};
}

// ---------------------------------------------------------------------------
// Corruption
// ---------------------------------------------------------------------------

SeverityTable SeverityTable::defaults() {
  SeverityTable t;
  t.table_[CorruptionKind::GaussianNoise] = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  t.table_[CorruptionKind::FeatureScale] = {1.0, 1.5, 2.0, 3.0, 4.0, 5.0};
  t.table_[CorruptionKind::Rotation] = {0.0, 9.0, 18.0, 27.0, 36.0, 45.0};
  t.table_[CorruptionKind::MeanShift] = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5};
  t.table_[CorruptionKind::FeatureDropout] = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  t.validate();
  return t;
}

void SeverityTable::validate() const {
  for (const auto& [kind, mags] : table_) {
    for (int s = 1; s <= 5; ++s) {
      if (!(mags[static_cast<size_t>(s)] > mags[static_cast<size_t>(s - 1)])) {
        throw std::invalid_argument(std::string("severity table for ") + to_string(kind) +
                                    " is not strictly increasing");
      }
    }
  }
  for (CorruptionKind k :
       {CorruptionKind::GaussianNoise, CorruptionKind::FeatureScale, CorruptionKind::Rotation,
        CorruptionKind::MeanShift, CorruptionKind::FeatureDropout}) {
    if (!table_.count(k)) {
      throw std::invalid_argument(std::string("severity table missing kind ") + to_string(k));
    }
  }
}

SeverityTable SeverityTable::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open severity table: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed severity table " + path + ": " + e.what());
  }
  SeverityTable t;
  for (const auto& [key, mags] : j.items()) {
    CorruptionKind kind = corruption_kind_from_string(key);
    if (!mags.is_array() || mags.size() != 6) {
      throw std::invalid_argument("severity table: " + key + " must list 6 magnitudes");
    }
    std::array<double, 6> arr{};
    for (int i = 0; i < 6; ++i) arr[static_cast<size_t>(i)] = mags.at(i).get<double>();
    t.table_[kind] = arr;
  }
  t.validate();
  return t;
}

void SeverityTable::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::invalid_argument("cannot write severity table: " + path);
  f << "{\n";
  bool first = true;
  for (const auto& [kind, mags] : table_) {
    if (!first) f << ",\n";
    first = false;
    f << "  \"" << to_string(kind) << "\": [";
    for (int i = 0; i < 6; ++i) f << (i ? ", " : "") << fmt_g17(mags[static_cast<size_t>(i)]);
    f << "]";
  }
  f << "\n}\n";
}

double SeverityTable::magnitude(CorruptionKind kind, int severity) const {
  if (severity < 0 || severity > 5) {
    throw std::invalid_argument("severity must be in 0..5, got " + std::to_string(severity));
  }
  return table_.at(kind)[static_cast<size_t>(severity)];
}

namespace {

double pooled_std(const Tensor& x) {
  const double mean = x.flat().mean();
  const double var = (x.flat().array() - mean).square().mean();
  return std::sqrt(var);
}

}  // namespace

Dataset apply_corruption(const Dataset& data, const CorruptionSpec& spec,
                         const SeverityTable& table) {
  if (data.size() == 0) throw std::invalid_argument("apply_corruption: empty dataset");
  const double mag = table.magnitude(spec.kind, spec.severity);
  if (spec.severity == 0) return data;  // bit-identical by contract

  Rng rng = Rng::derive(spec.seed, static_cast<std::uint64_t>(spec.kind) + 1);
  RowMatrix x = data.x.mat();
  const Index n = x.rows(), d = x.cols();

  switch (spec.kind) {
    case CorruptionKind::GaussianNoise: {
      const double sigma = mag * pooled_std(data.x);
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < d; ++j) x(i, j) += sigma * rng.normal();
      }
      break;
    }
    case CorruptionKind::FeatureScale: {
      x *= mag;
      break;
    }
    case CorruptionKind::Rotation: {
      // Disjoint coordinate pairs, each rotated by the same angle; the
      // pairing is drawn from the seed.
      const double theta = mag * M_PI / 180.0;
      const double c = std::cos(theta), s = std::sin(theta);
      std::vector<Index> order(static_cast<size_t>(d));
      std::iota(order.begin(), order.end(), Index{0});
      rng.shuffle(order);
      for (std::size_t k = 0; k + 1 < order.size(); k += 2) {
        const Index a = order[k], b = order[k + 1];
        for (Index i = 0; i < n; ++i) {
          const double xa = x(i, a), xb = x(i, b);
          x(i, a) = c * xa - s * xb;
          x(i, b) = s * xa + c * xb;
        }
      }
      break;
    }
    case CorruptionKind::MeanShift: {
      const double delta = mag * pooled_std(data.x);
      Eigen::VectorXd dir = random_unit_vector(d, rng);
      x.rowwise() += (delta * dir).transpose();
      break;
    }
    case CorruptionKind::FeatureDropout: {
      const auto k = static_cast<Index>(std::lround(mag * static_cast<double>(d)));
      std::vector<Index> coords(static_cast<size_t>(d));
      std::iota(coords.begin(), coords.end(), Index{0});
      for (Index i = 0; i < n; ++i) {
        rng.shuffle(coords);
        for (Index j = 0; j < k; ++j) x(i, coords[static_cast<size_t>(j)]) = 0.0;
      }
      break;
    }
  }

  return Dataset{Tensor::from_matrix(x), data.y, data.n_classes};
}

// ---------------------------------------------------------------------------
// Streams
// ---------------------------------------------------------------------------

Stream make_stream(const Dataset& data, Index batch_size, std::uint64_t seed, Index min_batch) {
  if (data.size() == 0) throw std::invalid_argument("make_stream: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("make_stream: batch_size must be >= 1");

  std::vector<Index> order(static_cast<size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng = Rng::derive(seed, 0x57e4);
  rng.shuffle(order);

  std::vector<StreamBatch> batches;
  Index dropped = 0;
  for (Index start = 0; start < data.size(); start += batch_size) {
    const Index count = std::min(batch_size, data.size() - start);
    if (count < min_batch) {
      dropped = count;
      break;
    }
    RowMatrix x(count, data.dim());
    std::vector<int> y(static_cast<size_t>(count));
    for (Index i = 0; i < count; ++i) {
      const Index src = order[static_cast<size_t>(start + i)];
      x.row(i) = data.x.mat().row(src);
      y[static_cast<size_t>(i)] = data.y[static_cast<size_t>(src)];
    }
    batches.emplace_back(Tensor::from_matrix(x), std::move(y));
  }
  return Stream(std::move(batches), dropped);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

Dataset load_csv_dataset(const std::string& path, Index expected_classes) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open dataset CSV: " + path);

  std::string line;
  if (!std::getline(f, line)) throw std::invalid_argument("dataset CSV is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  if (cols.empty() || cols[0] != "label") {
    throw std::invalid_argument("dataset CSV header must start with 'label', got: " + line);
  }
  const Index d = static_cast<Index>(cols.size()) - 1;
  if (d < 1) throw std::invalid_argument("dataset CSV declares no feature columns");
  for (Index i = 0; i < d; ++i) {
    if (cols[static_cast<size_t>(i + 1)] != "f" + std::to_string(i)) {
      throw std::invalid_argument("dataset CSV header column " + std::to_string(i + 1) +
                                  " must be f" + std::to_string(i));
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    Index col = 0;
    while (std::getline(ss, tok, ',')) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw std::invalid_argument("dataset CSV line " + std::to_string(line_no) +
                                    ": non-numeric value '" + tok + "'");
      }
      if (col == 0) {
        const int lab = static_cast<int>(v);
        if (static_cast<double>(lab) != v || lab < 0) {
          throw std::invalid_argument("dataset CSV line " + std::to_string(line_no) +
                                      ": label must be a non-negative integer");
        }
        labels.push_back(lab);
      } else {
        values.push_back(v);
      }
      ++col;
    }
    if (col != d + 1) {
      throw std::invalid_argument("dataset CSV line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(d + 1) + " fields, got " + std::to_string(col));
    }
  }
  if (labels.empty()) throw std::invalid_argument("dataset CSV has a header but no rows: " + path);

  Index n_classes = expected_classes;
  if (n_classes == 0) {
    n_classes = static_cast<Index>(*std::max_element(labels.begin(), labels.end())) + 1;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) {
      throw std::invalid_argument("dataset CSV: label " + std::to_string(labels[i]) +
                                  " out of range [0," + std::to_string(n_classes) + ")");
    }
  }

  const Index n = static_cast<Index>(labels.size());
  Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
  return Dataset{Tensor(Shape{n, d}, std::move(flat)), std::move(labels), n_classes};
}

void save_csv_dataset(const Dataset& data, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot write dataset CSV: " + path);
  f << "label";
  for (Index j = 0; j < data.dim(); ++j) f << ",f" << j;
  f << "\n";
  for (Index i = 0; i < data.size(); ++i) {
    f << data.y[static_cast<size_t>(i)];
    for (Index j = 0; j < data.dim(); ++j) f << ',' << fmt_g17(data.x(i, j));
    f << "\n";
  }
}

}  // namespace otta
