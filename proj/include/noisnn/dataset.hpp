#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "noisnn/tensor.hpp"

namespace noisnn {

struct Dataset {
  Tensor images;                     // [n, 1, rows, cols], values in [0, 1]
  std::vector<std::uint8_t> labels;  // class indices
  std::string split = "train";

  std::size_t size() const { return labels.size(); }
  /// Samples [begin, begin + count).
  Dataset slice(std::size_t begin, std::size_t count, std::string split_name) const;
  /// Images of the given sample indices, stacked in that order.
  Tensor gather_images(const std::vector<std::size_t>& indices) const;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Gzip-compressed files are detected by their magic bytes.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split = "train");

/// Locates <dir>/<prefix>-images-idx3-ubyte[.gz] and the matching labels file
/// for prefix "train" or "t10k".
Dataset load_idx_dir(const std::string& dir, const std::string& prefix);

/// Rows with a single 1 at each label.
Tensor one_hot(const std::vector<std::uint8_t>& labels, std::size_t classes);

/// Splits off the last `holdout` samples as a validation set.
std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, std::size_t holdout);

struct Batch {
  Tensor images;
  Tensor targets;  // one-hot
  std::vector<std::size_t> indices;
  std::vector<std::uint8_t> labels;
};

/// Walks a dataset in shuffled order. The permutation depends only on
/// (shuffle_seed, epoch); the final short batch is kept.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed,
                std::uint64_t epoch = 0, std::size_t classes = 10, bool shuffle = true);

  bool next(Batch& out);
  std::size_t batches() const { return (order_.size() + batch_size_ - 1) / batch_size_; }
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const Dataset* ds_;
  std::size_t batch_size_;
  std::size_t classes_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace noisnn
