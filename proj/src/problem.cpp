#include "freedrag/problem.hpp"

#include <random>

namespace freedrag {

std::string to_string(BackendType t) { return t == BackendType::Blob ? "blob" : "direct"; }

BackendType backend_type_from_string(const std::string& s) {
  if (s == "blob") return BackendType::Blob;
  if (s == "direct") return BackendType::Direct;
  throw ContractViolation("unknown backend type '" + s + "'");
}

Problem make_problem(const BackendSpec& spec) {
  auto blob = std::make_shared<const BlobBackend>(spec.blobs);
  if (spec.type == BackendType::Blob) {
    LatentCode w0 = blob->initial_latent();
    return {std::move(blob), std::move(w0)};
  }
  detail::require(spec.noise >= 0.0, "direct backend: noise must be >= 0");
  const GridShape shape = blob->output_shape();
  LatentCode w0 = blob->generate(blob->initial_latent()).data().matrix();
  if (spec.noise > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, spec.noise);
    for (Eigen::Index i = 0; i < w0.size(); ++i) w0[i] += normal(rng);
  }
  return {std::make_shared<const DirectFieldBackend>(shape), std::move(w0)};
}

}  // namespace freedrag
