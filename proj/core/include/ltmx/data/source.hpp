#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ltmx/data/tabular.hpp"
#include "ltmx/data/types.hpp"

namespace ltmx {

// A labeled pool of single-modality items addressed by index. Items are
// loaded on demand so large pools need not be resident.
class LabeledSource {
 public:
  virtual ~LabeledSource() = default;

  virtual const std::string& name() const = 0;
  virtual ModalityShape shape() const = 0;
  virtual int num_classes() const = 0;
  virtual std::size_t size() const = 0;
  virtual int label(std::size_t index) const = 0;
  virtual ModalityInput load(std::size_t index) const = 0;
};

// Items per class, by direct scan over labels.
std::vector<std::int64_t> class_histogram(const LabeledSource& source);

// 8-bit images held in memory (MNIST and SVHN pools).
class ByteImageSource final : public LabeledSource {
 public:
  ByteImageSource(std::string name, int channels, int height, int width, int num_classes,
                  std::vector<std::uint8_t> pixels_chw, std::vector<int> labels);

  const std::string& name() const override { return name_; }
  ModalityShape shape() const override { return ModalityShape::image(channels_, height_, width_); }
  int num_classes() const override { return num_classes_; }
  std::size_t size() const override { return labels_.size(); }
  int label(std::size_t index) const override { return labels_.at(index); }
  ModalityInput load(std::size_t index) const override;

 private:
  std::string name_;
  int channels_, height_, width_, num_classes_;
  std::vector<std::uint8_t> pixels_;
  std::vector<int> labels_;
};

class TabularSource final : public LabeledSource {
 public:
  TabularSource(std::string name, TabularSchema schema, int num_classes,
                std::vector<MetadataRecord> records, std::vector<int> labels);

  const std::string& name() const override { return name_; }
  ModalityShape shape() const override { return schema_.shape(); }
  int num_classes() const override { return num_classes_; }
  std::size_t size() const override { return labels_.size(); }
  int label(std::size_t index) const override { return labels_.at(index); }
  ModalityInput load(std::size_t index) const override;
  const MetadataRecord& record(std::size_t index) const { return records_.at(index); }

 private:
  std::string name_;
  TabularSchema schema_;
  int num_classes_;
  std::vector<MetadataRecord> records_;
  std::vector<int> labels_;
};

// MNIST IDX pair (idx3-ubyte images, idx1-ubyte labels).
std::unique_ptr<ByteImageSource> read_idx_source(const std::string& name,
                                                 const std::string& images_path,
                                                 const std::string& labels_path);

// SVHN cropped-digit MATLAB v5 file with variables X (32x32x3xN uint8) and y
// (Nx1, label 10 meaning digit 0). Compressed and uncompressed elements are
// both accepted.
std::unique_ptr<ByteImageSource> read_svhn_mat_source(const std::string& name,
                                                      const std::string& path);

}  // namespace ltmx
