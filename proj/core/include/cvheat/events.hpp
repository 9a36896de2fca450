#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "cvheat/tensor.hpp"

namespace cvheat::events {

struct Event {
  int x = 0;            // pixel column
  int y = 0;            // pixel row
  std::int64_t t = 0;   // microseconds
  int p = 1;            // polarity, -1 or +1
};

struct EventSlice {
  std::vector<Event> events;  // sorted by t, all within [t_start, t_end)
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
};

enum class Encoding : int { Frame = 0, Voxel = 1 };

struct EventTensor {
  Tensor data;  // (C, H, W), entries >= 0, total mass = event count
  Encoding encoding = Encoding::Frame;

  int channels() const { return data.shape[0]; }
  int height() const { return data.shape[1]; }
  int width() const { return data.shape[2]; }
};

// Parses lines "x,y,t,p" with p in {-1,1}. Throws std::runtime_error with the
// offending line number on malformed input or out-of-range coordinates.
std::vector<Event> parse_events(std::istream& source, int width, int height);

// Fixed-interval slicing. Slice i covers [i*interval, (i+1)*interval); the
// trailing partial window is kept. Concatenating the slices reproduces the
// input exactly. Input must be sorted by t.
std::vector<EventSlice> slice_stream(const std::vector<Event>& evs, std::int64_t interval_us);

// Channel 0 counts p=+1 events per pixel, channel 1 counts p=-1.
EventTensor encode_frame(const EventSlice& slice, int height, int width);

// Time range split into `bins` equal sub-windows; channel = polarity*bins+bin.
EventTensor encode_voxel(const EventSlice& slice, int height, int width, int bins);

// Horizontal mirror (flips the W axis); used by training augmentation.
EventTensor hflip(const EventTensor& t);

}  // namespace cvheat::events
