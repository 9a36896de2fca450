#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cvheat/detection.hpp"
#include "cvheat/events.hpp"
#include "cvheat/graph.hpp"
#include "cvheat/nn.hpp"

namespace cvheat::io {

// EventTensor binary: little-endian int32 header (C, H, W, encoding tag)
// followed by C*H*W little-endian float32 values.
void write_event_tensor(std::ostream& out, const events::EventTensor& t);
events::EventTensor read_event_tensor(std::istream& in);
void write_event_tensor_file(const std::string& path, const events::EventTensor& t);
events::EventTensor read_event_tensor_file(const std::string& path);

// Checkpoint: magic "CVHT", int32 count, then a name table
// (int32 name length, bytes, int32 ndim, int32 dims...) followed by all
// tensor payloads in table order as little-endian float32.
void save_checkpoint(const std::string& path, const nn::ParamStore& params);
// Loads values into matching names; throws on missing or mismatched entries.
void load_checkpoint(const std::string& path, nn::ParamStore& params);

// Event CSV "x,y,t,p" (one per line).
void write_events_csv(const std::string& path, const std::vector<events::Event>& evs);
std::vector<events::Event> read_events_csv(const std::string& path, int width, int height);

// Detection / ground-truth records: "image_id class_id score x1 y1 x2 y2"
// with normalized corner boxes. Ground truth uses score 1.
void write_detections(const std::string& path, const std::vector<det::EvalDetection>& dets);
std::vector<det::EvalDetection> read_detections(const std::string& path);
void write_ground_truth(const std::string& path,
                        const std::vector<std::vector<det::GroundTruth>>& gts_per_image);
std::vector<det::EvalGroundTruth> read_ground_truth(const std::string& path);
// Regroup flat records into per-image lists (image ids beyond n_images throw).
std::vector<std::vector<det::GroundTruth>> group_ground_truth(
    const std::vector<det::EvalGroundTruth>& flat, std::size_t n_images);

// Human-readable GraphBundle dump: a node table and edge list per graph.
void write_bundle_dump(std::ostream& out, const graph::GraphBundle& bundle);

// Plain (ASCII, P2) portable graymap of a (H,W) map, max-normalized to 255.
void write_pgm(const std::string& path, const Tensor& map2d);

// Max-normalized per-cell L2 norm across channels of a (C,H,W) tensor.
Tensor heatmap_of(const Tensor& chw);

}  // namespace cvheat::io
