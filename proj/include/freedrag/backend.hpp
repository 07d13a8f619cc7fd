#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "freedrag/feature_map.hpp"

namespace freedrag {

/// A differentiable generator mapping a latent code to a feature map.
///
/// Implementations are immutable after construction; generate and vjp are
/// reentrant and may be called concurrently.
class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index latent_length() const = 0;
  virtual GridShape output_shape() const = 0;

  /// Learning rate used by the drag engine when the config leaves it unset.
  virtual double default_learning_rate() const = 0;

  /// Throws ContractViolation on a latent length mismatch.
  FeatureMap generate(const LatentCode& w) const;

  /// Gradient of <cotangent, generate(w)> with respect to w.
  LatentCode vjp(const LatentCode& w, const FeatureMap& cotangent) const;

 protected:
  virtual void generate_into(const LatentCode& w, FeatureMap& out) const = 0;
  virtual LatentCode vjp_impl(const LatentCode& w, const FeatureMap& cotangent) const = 0;
};

/// The latent is the feature map itself, flattened in (y, x, c) order.
class DirectFieldBackend final : public GeneratorBackend {
 public:
  explicit DirectFieldBackend(GridShape shape);

  std::string name() const override { return "direct"; }
  Eigen::Index latent_length() const override { return shape_.size(); }
  GridShape output_shape() const override { return shape_; }
  double default_learning_rate() const override { return 0.01; }

 protected:
  void generate_into(const LatentCode& w, FeatureMap& out) const override;
  LatentCode vjp_impl(const LatentCode& w, const FeatureMap& cotangent) const override;

 private:
  GridShape shape_;
};

/// One Gaussian bump. `signature` weights the bump per channel.
struct BlobSpec {
  double cx = 0.0;
  double cy = 0.0;
  double amplitude = 1.0;
  double width = 4.0;
  std::vector<double> signature;  // empty means all ones
};

struct BlobGenConfig {
  int height = 64;
  int width = 64;
  int channels = 4;
  /// Per-channel multiplier on each blob's width; empty means all ones.
  std::vector<double> channel_width_scale;
  std::vector<BlobSpec> blobs;
  std::uint64_t seed = 0;
  /// Latent units of the appearance entries: the latent stores
  /// amplitude / amplitude_unit and log(width) / log_width_unit. Small units
  /// make appearance stiff relative to position under gradient descent.
  double amplitude_unit = 1.0;
  double log_width_unit = 1.0;
};

/// Latent entries per blob: (center_x, center_y, amplitude, log_width), the
/// last two in the config's latent units. Centers are stored in px.
inline constexpr int kBlobLatentStride = 4;

/// Sum of Gaussian bumps:
///   F(y, x, c) = sum_b amp_b * sig_bc * exp(-((x - cx_b)^2 + (y - cy_b)^2) / (2 (s_c sigma_b)^2))
/// with sigma_b = exp(log_width_b). Evaluated over the full grid.
class BlobBackend final : public GeneratorBackend {
 public:
  explicit BlobBackend(BlobGenConfig config);

  std::string name() const override { return "blob"; }
  Eigen::Index latent_length() const override {
    return static_cast<Eigen::Index>(config_.blobs.size()) * kBlobLatentStride;
  }
  GridShape output_shape() const override {
    return {config_.height, config_.width, config_.channels};
  }
  double default_learning_rate() const override;

  const BlobGenConfig& config() const { return config_; }
  int blob_count() const { return static_cast<int>(config_.blobs.size()); }

  /// Latent holding the configured blob parameters.
  LatentCode initial_latent() const;

 protected:
  void generate_into(const LatentCode& w, FeatureMap& out) const override;
  LatentCode vjp_impl(const LatentCode& w, const FeatureMap& cotangent) const override;

 private:
  BlobGenConfig config_;
  Eigen::MatrixXd signatures_;   // channels x blobs
  Eigen::VectorXd width_scale_;  // channels
};

/// Blob centers read from the latent layout, in slot order. Throws
/// UnsupportedOperation for backends without object positions.
std::vector<Point2> object_centers(const GeneratorBackend& backend, const LatentCode& w);

}  // namespace freedrag
