#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cvheat/detection.hpp"
#include "cvheat/events.hpp"

namespace cvheat::synth {

enum class ObjectShape : int { Square = 0, Disc = 1, Triangle = 2 };

struct SceneObject {
  ObjectShape shape = ObjectShape::Square;
  double cx = 0.0, cy = 0.0;   // pixels at t = 0
  double vx = 0.0, vy = 0.0;   // pixels per second
  double size = 16.0;          // half-extent / radius / circumradius, pixels
  double contrast = 1.0;       // edge contrast; scales the event rate
};

struct SyntheticScene {
  int width = 128, height = 128;
  std::vector<SceneObject> objects;
  double contour_rate = 40000.0;  // contour event attempts per object-second
  double noise_rate = 5000.0;     // uniform background events per second
  double jitter = 0.6;            // gaussian position jitter, pixels
};

struct SyntheticResult {
  std::vector<events::Event> stream;                      // sorted by t
  std::vector<std::vector<det::GroundTruth>> gts;         // one list per slice
};

// Emits events along moving-object contours (rate modulated by |v . n|, the
// event-camera visibility of an edge) plus uniform background noise. Static
// objects emit nothing. Ground truth is the object box at each slice
// midpoint, normalized and clipped. Deterministic per seed.
SyntheticResult generate_synthetic(const SyntheticScene& scene, std::int64_t duration_us,
                                   std::int64_t slice_interval_us, std::uint64_t seed);

// A randomized scene whose objects stay inside the frame for `duration_us`.
SyntheticScene random_scene(int resolution, int min_objects, int max_objects,
                            std::int64_t duration_us, std::mt19937_64& rng);

}  // namespace cvheat::synth
