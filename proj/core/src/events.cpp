#include "cvheat/events.hpp"

#include <charconv>
#include <istream>
#include <stdexcept>
#include <string>

namespace cvheat::events {

namespace {

[[noreturn]] void fail_line(std::size_t line_no, const std::string& why) {
  throw std::runtime_error("parse_events: line " + std::to_string(line_no) + ": " + why);
}

std::int64_t parse_int(std::string_view field, std::size_t line_no) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    fail_line(line_no, "malformed integer field '" + std::string(field) + "'");
  return v;
}

}  // namespace

std::vector<Event> parse_events(std::istream& source, int width, int height) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("parse_events: width/height must be positive");
  std::vector<Event> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string_view sv(line);
    std::int64_t fields[4];
    for (int f = 0; f < 4; ++f) {
      const std::size_t comma = sv.find(',');
      if (f < 3 && comma == std::string_view::npos) fail_line(line_no, "expected 4 fields x,y,t,p");
      if (f == 3 && comma != std::string_view::npos) fail_line(line_no, "expected 4 fields x,y,t,p");
      fields[f] = parse_int(f < 3 ? sv.substr(0, comma) : sv, line_no);
      if (f < 3) sv.remove_prefix(comma + 1);
    }
    Event e;
    e.x = static_cast<int>(fields[0]);
    e.y = static_cast<int>(fields[1]);
    e.t = fields[2];
    e.p = static_cast<int>(fields[3]);
    if (e.x < 0 || e.x >= width) fail_line(line_no, "x out of bounds");
    if (e.y < 0 || e.y >= height) fail_line(line_no, "y out of bounds");
    if (e.t < 0) fail_line(line_no, "negative timestamp");
    if (e.p != -1 && e.p != 1) fail_line(line_no, "polarity must be -1 or 1");
    out.push_back(e);
  }
  return out;
}

std::vector<EventSlice> slice_stream(const std::vector<Event>& evs, std::int64_t interval_us) {
  if (interval_us <= 0) throw std::invalid_argument("slice_stream: interval must be positive");
  for (std::size_t i = 1; i < evs.size(); ++i)
    if (evs[i].t < evs[i - 1].t)
      throw std::runtime_error("slice_stream: events not sorted by timestamp");
  std::vector<EventSlice> slices;
  if (evs.empty()) return slices;
  const std::int64_t last_window = evs.back().t / interval_us;
  slices.resize(static_cast<std::size_t>(last_window) + 1);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    slices[i].t_start = static_cast<std::int64_t>(i) * interval_us;
    slices[i].t_end = slices[i].t_start + interval_us;
  }
  for (const Event& e : evs) slices[static_cast<std::size_t>(e.t / interval_us)].events.push_back(e);
  return slices;
}

EventTensor encode_frame(const EventSlice& slice, int height, int width) {
  EventTensor t;
  t.encoding = Encoding::Frame;
  t.data = Tensor({2, height, width});
  for (const Event& e : slice.events) {
    if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height)
      throw std::runtime_error("encode_frame: event out of bounds");
    t.data.at3(e.p > 0 ? 0 : 1, e.y, e.x) += 1.0;
  }
  return t;
}

EventTensor encode_voxel(const EventSlice& slice, int height, int width, int bins) {
  if (bins < 1) throw std::invalid_argument("encode_voxel: bins must be >= 1");
  EventTensor t;
  t.encoding = Encoding::Voxel;
  t.data = Tensor({2 * bins, height, width});
  const std::int64_t span = slice.t_end - slice.t_start;
  for (const Event& e : slice.events) {
    if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height)
      throw std::runtime_error("encode_voxel: event out of bounds");
    int bin = span > 0 ? static_cast<int>((e.t - slice.t_start) * bins / span) : 0;
    if (bin >= bins) bin = bins - 1;
    if (bin < 0) bin = 0;
    const int pol = e.p > 0 ? 0 : 1;
    t.data.at3(pol * bins + bin, e.y, e.x) += 1.0;
  }
  return t;
}

EventTensor hflip(const EventTensor& t) {
  EventTensor out;
  out.encoding = t.encoding;
  out.data = Tensor(t.data.shape);
  const int c = t.channels(), h = t.height(), w = t.width();
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) out.data.at3(ch, i, j) = t.data.at3(ch, i, w - 1 - j);
  return out;
}

}  // namespace cvheat::events
