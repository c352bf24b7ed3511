#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "otta/tensor.hpp"

namespace otta {

struct Dataset {
  Tensor x;            // [N, d]
  std::vector<int> y;  // labels in [0, n_classes)
  Index n_classes = 0;

  Index size() const { return static_cast<Index>(y.size()); }
  Index dim() const { return x.rank() == 2 ? x.cols() : 0; }
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

struct DatasetSpec {
  Index n_classes = 10;
  Index feature_dim = 32;
  Index samples_per_class = 500;
  double cluster_spread = 0.15;
  std::uint64_t seed = 0;
};

/// Minimum pairwise angle between class centroids on the unit sphere.
inline constexpr double kMinCentroidAngle = M_PI / 4.0;

/// Gaussian clusters around unit-sphere centroids separated by at least
/// kMinCentroidAngle, stratified 80/20 into train/test. Deterministic per
/// seed; throws if the requested class count cannot be separated in the
/// given dimension.
SplitDataset gen_blobs(const DatasetSpec& spec);

/// Stratified split of an arbitrary dataset (per-class, deterministic).
SplitDataset split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed);

enum class CorruptionKind { GaussianNoise, FeatureScale, Rotation, MeanShift, FeatureDropout };

const char* to_string(CorruptionKind k);
CorruptionKind corruption_kind_from_string(const std::string& s);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 5;  // 0..5; 0 is bit-identical to the input
  std::uint64_t seed = 0;
};

/// Magnitude per severity level for each corruption kind. Magnitudes are
/// strictly increasing in severity. Units:
///   gaussian-noise  - noise sigma as a multiple of the pooled data std
///   feature-scale   - uniform positive scale factor
///   rotation        - plane rotation angle in degrees
///   mean-shift      - shift length as a multiple of the pooled data std
///   feature-dropout - fraction of coordinates zeroed per sample
class SeverityTable {
 public:
  static SeverityTable defaults();
  static SeverityTable load(const std::string& path);
  void save(const std::string& path) const;

  double magnitude(CorruptionKind kind, int severity) const;

 private:
  std::map<CorruptionKind, std::array<double, 6>> table_;
  void validate() const;
};

Dataset apply_corruption(const Dataset& data, const CorruptionSpec& spec,
                         const SeverityTable& table);

/// One adaptation mini-batch. Ground-truth labels ride along for scoring
/// only; the labels() accessor takes a tag so call sites outside metric
/// code stand out, and reads are counted for the audit.
struct metric_access_t {};

class StreamBatch {
 public:
  StreamBatch(Tensor x, std::vector<int> y) : x_(std::move(x)), y_(std::move(y)) {}

  const Tensor& x() const { return x_; }
  Index size() const { return static_cast<Index>(y_.size()); }
  const std::vector<int>& labels(metric_access_t) const {
    ++label_reads_;
    return y_;
  }
  long label_reads() const { return label_reads_; }

 private:
  Tensor x_;
  std::vector<int> y_;
  mutable long label_reads_ = 0;
};

/// A single fixed-order pass over a dataset; each batch is yielded exactly
/// once.
class Stream {
 public:
  Stream(std::vector<StreamBatch> batches, Index dropped_tail)
      : batches_(std::move(batches)), dropped_tail_(dropped_tail) {}

  /// nullptr once exhausted.
  const StreamBatch* next() {
    if (cursor_ >= batches_.size()) return nullptr;
    ++yields_;
    return &batches_[cursor_++];
  }

  void reset() { cursor_ = 0; }
  std::size_t batch_count() const { return batches_.size(); }
  const std::vector<StreamBatch>& batches() const { return batches_; }
  Index dropped_tail() const { return dropped_tail_; }
  long yields() const { return yields_; }

 private:
  std::vector<StreamBatch> batches_;
  std::size_t cursor_ = 0;
  Index dropped_tail_ = 0;
  long yields_ = 0;
};

/// One shuffled pass; a trailing batch smaller than min_batch is dropped
/// (batch statistics need N >= 2) and recorded.
Stream make_stream(const Dataset& data, Index batch_size, std::uint64_t seed, Index min_batch = 1);

/// CSV schema: header `label,f0,...,f{d-1}`, one sample per row.
Dataset load_csv_dataset(const std::string& path, Index expected_classes = 0);
void save_csv_dataset(const Dataset& data, const std::string& path);

}  // namespace otta
