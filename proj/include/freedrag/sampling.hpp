#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "freedrag/errors.hpp"
#include "freedrag/feature_map.hpp"

namespace freedrag {

namespace detail {

// Bilinear stencil of a clamped continuous position.
struct BilinearStencil {
  int x0, x1, y0, y1;
  double fx, fy;
  bool clamped_x, clamped_y;

  double w00() const { return (1.0 - fx) * (1.0 - fy); }
  double w01() const { return fx * (1.0 - fy); }
  double w10() const { return (1.0 - fx) * fy; }
  double w11() const { return fx * fy; }
};

inline BilinearStencil stencil(int height, int width, const Point2& p) {
  require(std::isfinite(p.x()) && std::isfinite(p.y()), "sample position must be finite");
  BilinearStencil s{};
  const double xmax = width - 1;
  const double ymax = height - 1;
  const double cx = std::clamp(p.x(), 0.0, xmax);
  const double cy = std::clamp(p.y(), 0.0, ymax);
  s.clamped_x = p.x() < 0.0 || p.x() > xmax;
  s.clamped_y = p.y() < 0.0 || p.y() > ymax;
  s.x0 = static_cast<int>(std::floor(cx));
  s.y0 = static_cast<int>(std::floor(cy));
  s.x1 = std::min(s.x0 + 1, width - 1);
  s.y1 = std::min(s.y0 + 1, height - 1);
  s.fx = cx - s.x0;
  s.fy = cy - s.y0;
  return s;
}

}  // namespace detail

/// Bilinear interpolation of F at p; positions outside the grid are clamped
/// to the border.
template <typename Scalar>
FeatureVectorT<Scalar> sample(const FeatureGrid<Scalar>& F, const Point2& p) {
  const auto s = detail::stencil(F.height(), F.width(), p);
  FeatureVectorT<Scalar> out =
      (Scalar(s.w00()) * F.cell(s.y0, s.x0) + Scalar(s.w01()) * F.cell(s.y0, s.x1) +
       Scalar(s.w10()) * F.cell(s.y1, s.x0) + Scalar(s.w11()) * F.cell(s.y1, s.x1))
          .matrix();
  return out;
}

/// Derivative of sample(F, p) with respect to p, as a C x 2 matrix. Zero along
/// an axis where p was clamped.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 2> sample_point_jacobian(const FeatureGrid<Scalar>& F,
                                                               const Point2& p) {
  const auto s = detail::stencil(F.height(), F.width(), p);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 2> J(F.channels(), 2);
  J.setZero();
  if (!s.clamped_x && s.x1 != s.x0) {
    J.col(0) = (Scalar(1.0 - s.fy) * (F.cell(s.y0, s.x1) - F.cell(s.y0, s.x0)) +
                Scalar(s.fy) * (F.cell(s.y1, s.x1) - F.cell(s.y1, s.x0)))
                   .matrix();
  }
  if (!s.clamped_y && s.y1 != s.y0) {
    J.col(1) = (Scalar(1.0 - s.fx) * (F.cell(s.y1, s.x0) - F.cell(s.y0, s.x0)) +
                Scalar(s.fx) * (F.cell(s.y1, s.x1) - F.cell(s.y0, s.x1)))
                   .matrix();
  }
  return J;
}

/// Adds the cotangent of sample(F, p) for output cotangent u into cot.
template <typename Scalar, typename Derived>
void sample_vjp_accumulate(FeatureGrid<Scalar>& cot, const Point2& p,
                           const Eigen::MatrixBase<Derived>& u) {
  const auto s = detail::stencil(cot.height(), cot.width(), p);
  const auto ua = u.array();
  cot.cell(s.y0, s.x0) += Scalar(s.w00()) * ua;
  cot.cell(s.y0, s.x1) += Scalar(s.w01()) * ua;
  cot.cell(s.y1, s.x0) += Scalar(s.w10()) * ua;
  cot.cell(s.y1, s.x1) += Scalar(s.w11()) * ua;
}

/// Sum of samples over the (2r+1) x (2r+1) unit-spaced patch centered at h.
/// Offsets are visited row-major (dy outer, dx inner).
template <typename Scalar>
FeatureVectorT<Scalar> aggregate(const FeatureGrid<Scalar>& F, const Point2& h, int r) {
  detail::require(r >= 0, "patch radius must be >= 0");
  FeatureVectorT<Scalar> acc = FeatureVectorT<Scalar>::Zero(F.channels());
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      acc += sample(F, Point2(h.x() + dx, h.y() + dy));
    }
  }
  return acc;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 2> aggregate_point_jacobian(const FeatureGrid<Scalar>& F,
                                                                  const Point2& h, int r) {
  detail::require(r >= 0, "patch radius must be >= 0");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 2> J(F.channels(), 2);
  J.setZero();
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      J += sample_point_jacobian(F, Point2(h.x() + dx, h.y() + dy));
    }
  }
  return J;
}

/// Adds d<u, aggregate(F, h, r)>/dF into cot.
template <typename Scalar, typename Derived>
void aggregate_vjp_accumulate(FeatureGrid<Scalar>& cot, const Point2& h, int r,
                              const Eigen::MatrixBase<Derived>& u) {
  detail::require(r >= 0, "patch radius must be >= 0");
  detail::require(u.size() == cot.channels(), "cotangent length must equal channel count");
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      sample_vjp_accumulate(cot, Point2(h.x() + dx, h.y() + dy), u);
    }
  }
}

/// Cotangent of aggregate(F, h, r) with respect to F for output cotangent u.
template <typename Scalar, typename Derived>
FeatureGrid<Scalar> aggregate_vjp(const GridShape& shape, const Point2& h, int r,
                                  const Eigen::MatrixBase<Derived>& u) {
  FeatureGrid<Scalar> cot(shape);
  aggregate_vjp_accumulate(cot, h, r, u);
  return cot;
}

}  // namespace freedrag
