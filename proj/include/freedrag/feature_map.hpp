#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "freedrag/errors.hpp"

namespace freedrag {

/// Continuous position in grid coordinates: x right, y down, origin at the
/// center of pixel (0, 0).
using Point2 = Eigen::Vector2d;

template <typename Scalar>
using FeatureVectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using FeatureVector = FeatureVectorT<double>;

/// Latent code of a generator backend.
using LatentCode = Eigen::VectorXd;

struct GridShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(height) * width * channels;
  }
  bool operator==(const GridShape&) const = default;
};

/// H x W x C grid of features stored channel-last, row-major:
/// index (y, x, c) -> (y * W + x) * C + c.
template <typename Scalar>
class FeatureGrid {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  FeatureGrid() = default;
  explicit FeatureGrid(GridShape shape) : shape_(shape), data_(Storage::Zero(shape.size())) {
    detail::require(shape.height >= 1 && shape.width >= 1 && shape.channels >= 1,
                    "feature grid dimensions must be >= 1");
  }
  FeatureGrid(GridShape shape, Storage data) : shape_(shape), data_(std::move(data)) {
    detail::require(shape.height >= 1 && shape.width >= 1 && shape.channels >= 1,
                    "feature grid dimensions must be >= 1");
    detail::require(data_.size() == shape.size(), "feature grid data size mismatch");
  }

  static FeatureGrid Constant(GridShape shape, Scalar value) {
    return FeatureGrid(shape, Storage::Constant(shape.size(), value));
  }

  const GridShape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }

  Eigen::Index offset(int y, int x) const {
    return (static_cast<Eigen::Index>(y) * shape_.width + x) * shape_.channels;
  }
  Scalar& operator()(int y, int x, int c) { return data_[offset(y, x) + c]; }
  Scalar operator()(int y, int x, int c) const { return data_[offset(y, x) + c]; }

  auto cell(int y, int x) { return data_.segment(offset(y, x), shape_.channels); }
  auto cell(int y, int x) const { return data_.segment(offset(y, x), shape_.channels); }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  bool all_finite() const { return data_.allFinite(); }

 private:
  GridShape shape_;
  Storage data_;
};

using FeatureMap = FeatureGrid<double>;

/// Binary H x W grid. 1 marks the editable region.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width), cells_(static_cast<std::size_t>(height) * width, fill) {
    detail::require(height >= 1 && width >= 1, "mask dimensions must be >= 1");
    detail::require(fill <= 1, "mask entries must be 0 or 1");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::uint8_t operator()(int y, int x) const { return cells_[index(y, x)]; }
  void set(int y, int x, bool editable) { cells_[index(y, x)] = editable ? 1 : 0; }
  const std::vector<std::uint8_t>& cells() const { return cells_; }
  bool operator==(const Mask&) const = default;

 private:
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> cells_;
};

}  // namespace freedrag
