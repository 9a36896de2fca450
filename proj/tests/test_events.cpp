#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "cvheat/events.hpp"

using namespace cvheat;
using namespace cvheat::events;

TEST_CASE("parse_events reads x,y,t,p lines in order") {
  std::istringstream in("3,2,1000,1\n0,0,2000,-1\n");
  const auto evs = parse_events(in, 8, 8);
  REQUIRE(evs.size() == 2);
  CHECK(evs[0].x == 3);
  CHECK(evs[0].y == 2);
  CHECK(evs[0].t == 1000);
  CHECK(evs[0].p == 1);
  CHECK(evs[1].p == -1);
}

TEST_CASE("parse_events empty stream gives empty list") {
  std::istringstream in("");
  CHECK(parse_events(in, 8, 8).empty());
}

TEST_CASE("parse_events rejects bad polarity with line number") {
  std::istringstream in("3,2,1000,0\n");
  CHECK_THROWS_WITH_AS(parse_events(in, 8, 8), doctest::Contains("line 1"), std::runtime_error);
}

TEST_CASE("parse_events rejects out-of-range coordinates and malformed lines") {
  std::istringstream a("8,2,1000,1\n");
  CHECK_THROWS_AS(parse_events(a, 8, 8), std::runtime_error);
  std::istringstream b("1,2,1000\n");
  CHECK_THROWS_AS(parse_events(b, 8, 8), std::runtime_error);
  std::istringstream c("1,2,x,1\n");
  CHECK_THROWS_WITH_AS(parse_events(c, 8, 8), doctest::Contains("line 1"), std::runtime_error);
  std::istringstream d("ok\n1,2,3,1,9\n");
  CHECK_THROWS_AS(parse_events(d, 8, 8), std::runtime_error);
}

TEST_CASE("slice_stream fixed intervals") {
  auto ev = [](std::int64_t t) { return Event{0, 0, t, 1}; };

  SUBCASE("all within one window") {
    const auto slices = slice_stream({ev(0), ev(5000), ev(9999)}, 10000);
    REQUIRE(slices.size() == 1);
    CHECK(slices[0].events.size() == 3);
    CHECK(slices[0].t_start == 0);
    CHECK(slices[0].t_end == 10000);
  }
  SUBCASE("boundary timestamp opens the next slice") {
    const auto slices = slice_stream({ev(0), ev(10000)}, 10000);
    REQUIRE(slices.size() == 2);
    CHECK(slices[0].events.size() == 1);
    CHECK(slices[1].events.size() == 1);
    CHECK(slices[1].t_start == 10000);
  }
  SUBCASE("empty input") { CHECK(slice_stream({}, 10000).empty()); }
  SUBCASE("unsorted input rejected") {
    CHECK_THROWS_AS(slice_stream({ev(5), ev(1)}, 10000), std::runtime_error);
  }
  SUBCASE("empty gap slices are emitted") {
    const auto slices = slice_stream({ev(0), ev(25000)}, 10000);
    REQUIRE(slices.size() == 3);
    CHECK(slices[1].events.empty());
  }
}

TEST_CASE("slice partition property: concatenation reproduces the input") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Event> evs;
    std::int64_t t = 0;
    const int n = static_cast<int>(rng() % 200);
    for (int i = 0; i < n; ++i) {
      t += static_cast<std::int64_t>(rng() % 4000);
      evs.push_back({static_cast<int>(rng() % 16), static_cast<int>(rng() % 16), t,
                     (rng() & 1) ? 1 : -1});
    }
    const auto slices = slice_stream(evs, 10000);
    std::vector<Event> cat;
    for (const auto& s : slices) {
      for (const auto& e : s.events) {
        CHECK(e.t >= s.t_start);
        CHECK(e.t < s.t_end);
        cat.push_back(e);
      }
      CHECK(s.t_end - s.t_start == 10000);
    }
    REQUIRE(cat.size() == evs.size());
    for (std::size_t i = 0; i < evs.size(); ++i) {
      CHECK(cat[i].t == evs[i].t);
      CHECK(cat[i].x == evs[i].x);
    }
  }
}

TEST_CASE("encode_frame accumulates per-polarity counts") {
  EventSlice s;
  s.t_start = 0;
  s.t_end = 10000;

  SUBCASE("two same-pixel positive events") {
    s.events = {{3, 2, 0, 1}, {3, 2, 5, 1}};
    const auto t = encode_frame(s, 4, 8);
    CHECK(t.data.at3(0, 2, 3) == 2.0);
    CHECK(t.data.sum() == 2.0);
  }
  SUBCASE("empty slice is all zeros") {
    const auto t = encode_frame(s, 4, 8);
    CHECK(t.data.sum() == 0.0);
  }
  SUBCASE("polarities go to separate channels") {
    s.events = {{1, 1, 0, 1}, {1, 1, 5, -1}};
    const auto t = encode_frame(s, 4, 8);
    CHECK(t.data.at3(0, 1, 1) == 1.0);
    CHECK(t.data.at3(1, 1, 1) == 1.0);
  }
}

TEST_CASE("encode_voxel bins time within the slice") {
  EventSlice s;
  s.t_start = 0;
  s.t_end = 8000;

  SUBCASE("bins=1 matches encode_frame") {
    s.events = {{1, 2, 100, 1}, {5, 3, 7000, -1}, {1, 2, 300, 1}};
    const auto f = encode_frame(s, 4, 8);
    const auto v = encode_voxel(s, 4, 8, 1);
    REQUIRE(v.data.shape == f.data.shape);
    for (std::int64_t i = 0; i < f.data.size(); ++i) CHECK(v.data.data[i] == f.data.data[i]);
  }
  SUBCASE("event at t_start lands in bin 0") {
    s.events = {{0, 0, 0, 1}};
    const auto v = encode_voxel(s, 4, 8, 4);
    CHECK(v.data.at3(0, 0, 0) == 1.0);
  }
  SUBCASE("uniform spread splits evenly across bins") {
    s.events = {{0, 0, 0, 1}, {0, 0, 2000, 1}, {0, 0, 4000, 1}, {0, 0, 6000, 1}};
    const auto v = encode_voxel(s, 4, 8, 2);
    double bin0 = 0.0, bin1 = 0.0;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 8; ++x) {
        bin0 += v.data.at3(0, y, x);
        bin1 += v.data.at3(1, y, x);
      }
    CHECK(bin0 == 2.0);
    CHECK(bin1 == 2.0);
  }
  SUBCASE("bins=0 rejected") { CHECK_THROWS_AS(encode_voxel(s, 4, 8, 0), std::invalid_argument); }
}

TEST_CASE("count conservation and polarity split hold for random slices") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    EventSlice s;
    s.t_start = 0;
    s.t_end = 10000;
    int pos = 0, neg = 0;
    const int n = static_cast<int>(rng() % 300);
    for (int i = 0; i < n; ++i) {
      Event e{static_cast<int>(rng() % 16), static_cast<int>(rng() % 12),
              static_cast<std::int64_t>(rng() % 10000), (rng() & 1) ? 1 : -1};
      (e.p > 0 ? pos : neg) += 1;
      s.events.push_back(e);
    }
    std::sort(s.events.begin(), s.events.end(),
              [](const Event& a, const Event& b) { return a.t < b.t; });
    const auto f = encode_frame(s, 12, 16);
    CHECK(f.data.sum() == static_cast<double>(n));
    double ch0 = 0.0;
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 16; ++x) ch0 += f.data.at3(0, y, x);
    CHECK(ch0 == static_cast<double>(pos));
    const auto v = encode_voxel(s, 12, 16, 3);
    CHECK(v.data.sum() == static_cast<double>(n));
    (void)neg;
    for (double val : v.data.data) CHECK(val >= 0.0);
  }
}
