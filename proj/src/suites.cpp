#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "freedrag/evaluation.hpp"

namespace freedrag {

BlobGenConfig default_blob_scene() {
  BlobGenConfig c;
  c.height = 64;
  c.width = 64;
  c.channels = 4;
  c.channel_width_scale = {0.75, 1.0, 1.25, 1.5};
  c.amplitude_unit = 1e-3;
  c.log_width_unit = 1e-2;
  return c;
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool inside(const Point2& p, double margin, int size) {
  return p.x() >= margin && p.x() <= size - 1 - margin && p.y() >= margin &&
         p.y() <= size - 1 - margin;
}

Point2 random_target(Rng& rng, const Point2& from, double min_len, double max_len, int size) {
  for (;;) {
    const double len = uniform(rng, min_len, max_len);
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const Point2 t = from + len * Point2(std::cos(angle), std::sin(angle));
    if (inside(t, 6.0, size)) return t;
  }
}

std::vector<double> random_signature(Rng& rng, int channels) {
  std::vector<double> sig(channels);
  for (auto& s : sig) s = uniform(rng, 0.5, 1.5);
  return sig;
}

}  // namespace

std::vector<Instruction> single_blob_suite(int count, std::uint64_t seed) {
  std::vector<Instruction> out;
  for (int i = 0; i < count; ++i) {
    Rng rng(seed * 1000003u + i);
    Instruction inst;
    inst.name = "single-" + std::to_string(i);
    inst.seed = seed * 1000003u + i;
    inst.backend.blobs = default_blob_scene();
    const int size = inst.backend.blobs.width;
    const Point2 start(uniform(rng, 12.0, size - 13.0), uniform(rng, 12.0, size - 13.0));
    const Point2 target = random_target(rng, start, 10.0, 40.0, size);
    inst.backend.blobs.blobs.push_back({start.x(), start.y(), 0.1, 4.0, {}});
    inst.backend.seed = inst.seed;
    inst.points.push_back({start, target});
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instruction> standard_suite(int count, std::uint64_t seed) {
  std::vector<Instruction> out;
  for (int i = 0; i < count; ++i) {
    Rng rng(seed * 1000003u + 7919u + i);
    Instruction inst;
    inst.name = "standard-" + std::to_string(i);
    inst.seed = seed * 1000003u + 7919u + i;
    inst.backend.blobs = default_blob_scene();
    inst.backend.seed = inst.seed;
    const int size = inst.backend.blobs.width;
    const int C = inst.backend.blobs.channels;

    std::vector<Point2> centers;
    while (centers.size() < 3) {
      const Point2 c(uniform(rng, 10.0, size - 11.0), uniform(rng, 10.0, size - 11.0));
      bool far = true;
      for (const auto& o : centers) far = far && (o - c).norm() >= 12.0;
      if (far) centers.push_back(c);
    }
    for (const auto& c : centers) {
      inst.backend.blobs.blobs.push_back(
          {c.x(), c.y(), uniform(rng, 0.08, 0.12), uniform(rng, 3.5, 4.5), random_signature(rng, C)});
    }
    const int drags = (i % 3 == 2) ? 2 : 1;
    for (int k = 0; k < drags; ++k) {
      inst.points.push_back({centers[k], random_target(rng, centers[k], 10.0, 25.0, size)});
    }
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instruction> ambiguity_suite(int count, std::uint64_t seed) {
  std::vector<Instruction> out;
  for (int i = 0; i < count; ++i) {
    Rng rng(seed * 1000003u + 104729u + i);
    Instruction inst;
    inst.name = "ambiguity-" + std::to_string(i);
    inst.seed = seed * 1000003u + 104729u + i;
    inst.backend.blobs = default_blob_scene();
    inst.backend.seed = inst.seed;
    const int size = inst.backend.blobs.width;

    // Drag along a random direction; the twin sits ahead of the handle, a
    // few px off the path.
    for (;;) {
      const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const Point2 dir(std::cos(angle), std::sin(angle));
      const Point2 normal(-dir.y(), dir.x());
      const double len = uniform(rng, 18.0, 26.0);
      const Point2 start = Point2(size / 2.0, size / 2.0) - 0.5 * len * dir;
      const Point2 target = start + len * dir;
      const double side = (i % 2 == 0) ? 1.0 : -1.0;
      const Point2 twin = start + uniform(rng, 8.0, 11.0) * dir + side * uniform(rng, 2.0, 3.0) * normal;
      const Point2 twin_rounded(std::round(twin.x()), std::round(twin.y()));
      if (!inside(start, 6.0, size) || !inside(target, 6.0, size)) continue;
      // Narrow twins stay visually distinct instead of merging into one lump.
      inst.backend.blobs.blobs.push_back({start.x(), start.y(), 0.1, 2.2, {}});
      inst.backend.blobs.blobs.push_back({twin_rounded.x(), twin_rounded.y(), 0.1, 2.2, {}});
      inst.points.push_back({start, target});
      break;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace freedrag
