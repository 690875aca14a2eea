#include "noisnn/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "noisnn/error.hpp"
#include "noisnn/rng.hpp"

namespace noisnn {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// zlib reads plain files unchanged, so one path serves both .gz and raw IDX.
std::vector<std::uint8_t> read_maybe_gzip(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw FormatError("cannot open " + path);
  std::vector<std::uint8_t> bytes;
  std::uint8_t buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof buf)) > 0) bytes.insert(bytes.end(), buf, buf + n);
  int err = 0;
  const char* msg = gzerror(f, &err);
  const bool failed = n < 0 || (err != Z_OK && err != Z_STREAM_END);
  std::string why = failed ? std::string(msg) : "";
  gzclose(f);
  if (failed) throw FormatError(path + ": " + why);
  return bytes;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

std::string hex_bytes(const std::vector<std::uint8_t>& b, std::size_t n) {
  std::string s;
  char tmp[4];
  for (std::size_t i = 0; i < std::min(n, b.size()); ++i) {
    std::snprintf(tmp, sizeof tmp, "%02x", b[i]);
    if (i) s += ' ';
    s += tmp;
  }
  return s;
}

void check_magic(const std::vector<std::uint8_t>& b, std::uint32_t want, const std::string& path) {
  if (b.size() < 4 || be32(b, 0) != want) {
    char expect[16];
    std::snprintf(expect, sizeof expect, "0x%08x", want);
    throw FormatError(path + ": bad IDX magic, expected " + expect + ", observed bytes [" +
                      hex_bytes(b, 4) + "]");
  }
}

}  // namespace

Dataset Dataset::slice(std::size_t begin, std::size_t count, std::string split_name) const {
  if (begin + count > size()) throw DimensionError("dataset slice out of range");
  if (count == 0) throw DimensionError("empty dataset slice");
  const std::size_t per = images.numel() / size();
  Shape s = images.shape();
  s[0] = count;
  std::vector<float> px(images.storage().begin() + begin * per,
                        images.storage().begin() + (begin + count) * per);
  Dataset out;
  out.images = Tensor(s, std::move(px));
  out.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
  out.split = std::move(split_name);
  return out;
}

Tensor Dataset::gather_images(const std::vector<std::size_t>& indices) const {
  const std::size_t per = images.numel() / size();
  Shape s = images.shape();
  s[0] = indices.size();
  Tensor out(s);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(images.data() + indices[i] * per, per, out.data() + i * per);
  }
  return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split) {
  const auto img = read_maybe_gzip(images_path);
  const auto lab = read_maybe_gzip(labels_path);
  check_magic(img, kImageMagic, images_path);
  check_magic(lab, kLabelMagic, labels_path);
  if (img.size() < 16) throw LengthError(images_path + ": truncated header");
  if (lab.size() < 8) throw LengthError(labels_path + ": truncated header");

  const std::size_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  const std::size_t nl = be32(lab, 4);
  if (n != nl) {
    throw FormatError("image count " + std::to_string(n) + " != label count " +
                      std::to_string(nl));
  }
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(images_path + ": empty dataset");
  if (img.size() < 16 + n * rows * cols) {
    throw LengthError(images_path + ": truncated, expected " +
                      std::to_string(16 + n * rows * cols) + " bytes, found " +
                      std::to_string(img.size()));
  }
  if (lab.size() < 8 + n) {
    throw LengthError(labels_path + ": truncated, expected " + std::to_string(8 + n) +
                      " bytes, found " + std::to_string(lab.size()));
  }

  Dataset ds;
  ds.split = split;
  ds.images = Tensor({n, 1, rows, cols});
  float* px = ds.images.data();
  for (std::size_t i = 0; i < n * rows * cols; ++i) px[i] = img[16 + i] / 255.0f;
  ds.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  for (auto l : ds.labels) {
    if (l > 9) throw FormatError(labels_path + ": label " + std::to_string(l) + " out of range");
  }
  return ds;
}

Dataset load_idx_dir(const std::string& dir, const std::string& prefix) {
  namespace fs = std::filesystem;
  auto find = [&](const std::string& stem) {
    for (const char* ext : {"", ".gz"}) {
      fs::path p = fs::path(dir) / (prefix + stem + ext);
      if (fs::exists(p)) return p.string();
    }
    throw FormatError("no " + prefix + stem + "[.gz] under " + dir);
  };
  return load_idx(find("-images-idx3-ubyte"), find("-labels-idx1-ubyte"),
                  prefix == "t10k" ? "test" : prefix);
}

Tensor one_hot(const std::vector<std::uint8_t>& labels, std::size_t classes) {
  Tensor t({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw DimensionError("label exceeds class count");
    t[i * classes + labels[i]] = 1.0f;
  }
  return t;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, std::size_t holdout) {
  if (holdout >= ds.size()) throw ConfigError("holdout leaves no training samples");
  Dataset train = ds.slice(0, ds.size() - holdout, "train");
  Dataset val = holdout ? ds.slice(ds.size() - holdout, holdout, "val") : Dataset{};
  return {std::move(train), std::move(val)};
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size,
                             std::uint64_t shuffle_seed, std::uint64_t epoch, std::size_t classes,
                             bool shuffle)
    : ds_(&ds), batch_size_(batch_size), classes_(classes), order_(ds.size()) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle) {
    Rng rng = Rng::substream(shuffle_seed, StreamTag::shuffle, {epoch});
    std::shuffle(order_.begin(), order_.end(), rng.engine());
  }
}

bool BatchIterator::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  out.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                     order_.begin() + static_cast<std::ptrdiff_t>(end));
  out.labels.clear();
  for (auto i : out.indices) out.labels.push_back(ds_->labels[i]);
  out.images = ds_->gather_images(out.indices);
  out.targets = one_hot(out.labels, classes_);
  cursor_ = end;
  return true;
}

}  // namespace noisnn
