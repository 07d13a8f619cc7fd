#include "freedrag/backend.hpp"

#include <cmath>
#include <string>

namespace freedrag {

FeatureMap GeneratorBackend::generate(const LatentCode& w) const {
  detail::require(w.size() == latent_length(),
                  name() + " backend: latent length " + std::to_string(w.size()) +
                      " != expected " + std::to_string(latent_length()));
  FeatureMap out(output_shape());
  generate_into(w, out);
  return out;
}

LatentCode GeneratorBackend::vjp(const LatentCode& w, const FeatureMap& cotangent) const {
  detail::require(w.size() == latent_length(), name() + " backend: latent length mismatch");
  detail::require(cotangent.shape() == output_shape(),
                  name() + " backend: cotangent shape mismatch");
  return vjp_impl(w, cotangent);
}

// ---------------------------------------------------------------------------

DirectFieldBackend::DirectFieldBackend(GridShape shape) : shape_(shape) {
  detail::require(shape.height >= 1 && shape.width >= 1 && shape.channels >= 1,
                  "direct backend dimensions must be >= 1");
}

void DirectFieldBackend::generate_into(const LatentCode& w, FeatureMap& out) const {
  out.data() = w.array();
}

LatentCode DirectFieldBackend::vjp_impl(const LatentCode&, const FeatureMap& cotangent) const {
  return cotangent.data().matrix();
}

// ---------------------------------------------------------------------------

BlobBackend::BlobBackend(BlobGenConfig config) : config_(std::move(config)) {
  const int C = config_.channels;
  detail::require(config_.height >= 1 && config_.width >= 1 && C >= 1,
                  "blob backend dimensions must be >= 1");
  detail::require(!config_.blobs.empty(), "blob backend needs at least one blob");

  width_scale_ = Eigen::VectorXd::Ones(C);
  if (!config_.channel_width_scale.empty()) {
    detail::require(static_cast<int>(config_.channel_width_scale.size()) == C,
                    "channel_width_scale length must equal channel count");
    for (int c = 0; c < C; ++c) {
      detail::require(config_.channel_width_scale[c] > 0.0, "channel width scale must be > 0");
      width_scale_[c] = config_.channel_width_scale[c];
    }
  }

  detail::require(config_.amplitude_unit > 0.0 && config_.log_width_unit > 0.0,
                  "blob latent units must be > 0");

  signatures_ = Eigen::MatrixXd::Ones(C, blob_count());
  for (int b = 0; b < blob_count(); ++b) {
    const auto& blob = config_.blobs[b];
    detail::require(blob.width > 0.0, "blob width must be > 0");
    if (!blob.signature.empty()) {
      detail::require(static_cast<int>(blob.signature.size()) == C,
                      "blob signature length must equal channel count");
      for (int c = 0; c < C; ++c) signatures_(c, b) = blob.signature[c];
    }
  }
}

double BlobBackend::default_learning_rate() const { return 2.0; }

LatentCode BlobBackend::initial_latent() const {
  LatentCode w(latent_length());
  for (int b = 0; b < blob_count(); ++b) {
    const auto& blob = config_.blobs[b];
    w.segment<kBlobLatentStride>(b * kBlobLatentStride) << blob.cx, blob.cy,
        blob.amplitude / config_.amplitude_unit, std::log(blob.width) / config_.log_width_unit;
  }
  return w;
}

void BlobBackend::generate_into(const LatentCode& w, FeatureMap& out) const {
  const int H = config_.height, W = config_.width, C = config_.channels;
  Eigen::ArrayXd inv_two_var(C);
  for (int b = 0; b < blob_count(); ++b) {
    const auto p = w.segment<kBlobLatentStride>(b * kBlobLatentStride);
    const double cx = p[0], cy = p[1], amp = p[2] * config_.amplitude_unit;
    const double sigma = std::exp(p[3] * config_.log_width_unit);
    inv_two_var = 1.0 / (2.0 * (width_scale_.array() * sigma).square());
    const Eigen::ArrayXd weight = amp * signatures_.col(b).array();
    for (int y = 0; y < H; ++y) {
      const double dy2 = (y - cy) * (y - cy);
      for (int x = 0; x < W; ++x) {
        const double r2 = (x - cx) * (x - cx) + dy2;
        out.cell(y, x) += weight * (-r2 * inv_two_var).exp();
      }
    }
  }
}

LatentCode BlobBackend::vjp_impl(const LatentCode& w, const FeatureMap& cot) const {
  const int H = config_.height, W = config_.width, C = config_.channels;
  LatentCode grad = LatentCode::Zero(latent_length());
  Eigen::ArrayXd inv_var(C);
  for (int b = 0; b < blob_count(); ++b) {
    const auto p = w.segment<kBlobLatentStride>(b * kBlobLatentStride);
    const double cx = p[0], cy = p[1], amp = p[2] * config_.amplitude_unit;
    const double sigma = std::exp(p[3] * config_.log_width_unit);
    inv_var = 1.0 / (width_scale_.array() * sigma).square();
    const Eigen::ArrayXd sig = signatures_.col(b).array();
    double g_cx = 0.0, g_cy = 0.0, g_amp = 0.0, g_lw = 0.0;
    for (int y = 0; y < H; ++y) {
      const double dy = y - cy;
      for (int x = 0; x < W; ++x) {
        const double dx = x - cx;
        const double r2 = dx * dx + dy * dy;
        // u_c * sig_c * exp(-r2 / (2 var_c)), per channel
        const Eigen::ArrayXd base = cot.cell(y, x) * sig * (-0.5 * r2 * inv_var).exp();
        g_amp += base.sum();
        const Eigen::ArrayXd scaled = amp * base * inv_var;
        const double s = scaled.sum();
        g_cx += s * dx;
        g_cy += s * dy;
        g_lw += r2 * s;
      }
    }
    grad.segment<kBlobLatentStride>(b * kBlobLatentStride) << g_cx, g_cy,
        g_amp * config_.amplitude_unit, g_lw * config_.log_width_unit;
  }
  return grad;
}

std::vector<Point2> object_centers(const GeneratorBackend& backend, const LatentCode& w) {
  const auto* blob = dynamic_cast<const BlobBackend*>(&backend);
  if (blob == nullptr) {
    throw UnsupportedOperation("object_centers requires a blob backend, got '" + backend.name() +
                               "'");
  }
  detail::require(w.size() == blob->latent_length(), "blob backend: latent length mismatch");
  std::vector<Point2> centers;
  centers.reserve(blob->blob_count());
  for (int b = 0; b < blob->blob_count(); ++b) {
    centers.emplace_back(w[b * kBlobLatentStride], w[b * kBlobLatentStride + 1]);
  }
  return centers;
}

}  // namespace freedrag
