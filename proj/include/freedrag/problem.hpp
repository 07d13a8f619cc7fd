#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "freedrag/backend.hpp"

namespace freedrag {

enum class BackendType { Blob, Direct };

std::string to_string(BackendType t);
BackendType backend_type_from_string(const std::string& s);

/// Backend choice plus what is needed to build the starting latent.
///
/// Blob: the latent holds the configured blobs. Direct: the latent is the
/// blob field rendered once, plus seeded Gaussian noise of scale `noise`.
struct BackendSpec {
  BackendType type = BackendType::Blob;
  BlobGenConfig blobs;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

struct Problem {
  std::shared_ptr<const GeneratorBackend> backend;
  LatentCode initial_latent;
};

Problem make_problem(const BackendSpec& spec);

}  // namespace freedrag
