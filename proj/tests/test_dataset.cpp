#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "gmethods/dataset.hpp"

using namespace gmethods;

namespace {

std::string tmp_path(const char* name) {
  return std::string("/tmp/gmethods_test_") + name;
}

}  // namespace

TEST_CASE("longitudinal csv round trip") {
  LongitudinalDataset d;
  d.scenario_id = "demo";
  d.seed = 17;
  d.push(0, 1, 0, 1);
  d.push(1, 0, 1, 0);
  d.push(1, 1, 1, 1);
  d.validate();
  std::string path = tmp_path("roundtrip.csv");
  d.write_csv(path);
  LongitudinalDataset back = LongitudinalDataset::read_csv(path);
  CHECK(back.scenario_id == "demo");
  CHECK(back.seed == 17);
  REQUIRE(back.size() == 3);
  CHECK(back.a1 == d.a1);
  CHECK(back.l == d.l);
  CHECK(back.a2 == d.a2);
  CHECK(back.y == d.y);
  std::remove(path.c_str());
}

TEST_CASE("censored records carry y = -1 and a censor column") {
  LongitudinalDataset d;
  d.push(0, 1, 0, 1);
  d.push(1, 0, 1, -1);
  d.cens = {0, 1};
  d.validate();
  std::string path = tmp_path("censored.csv");
  d.write_csv(path);
  LongitudinalDataset back = LongitudinalDataset::read_csv(path);
  REQUIRE(back.has_censoring());
  CHECK(back.cens[1] == 1);
  CHECK(back.y[1] == -1);
  std::remove(path.c_str());

  LongitudinalDataset bad = d;
  bad.y[1] = 0;  // censored record with an observed outcome
  CHECK_THROWS(bad.validate());
}

TEST_CASE("dataset validation catches out-of-support codes") {
  LongitudinalDataset d;
  d.push(0, 0, 0, 0);
  d.push(2, 0, 0, 0);  // a1 out of its default binary support
  CHECK_THROWS(d.validate());
  d.a1_levels = 3;
  d.validate();
}

TEST_CASE("csv reader rejects malformed input") {
  std::string path = tmp_path("bad.csv");
  {
    std::ofstream out(path);
    out << "a1,l,a2\n0,0,0\n";
  }
  CHECK_THROWS(LongitudinalDataset::read_csv(path));
  {
    std::ofstream out(path);
    out << "a1,l,a2,y\n0,0,zero,0\n";
  }
  CHECK_THROWS(LongitudinalDataset::read_csv(path));
  {
    std::ofstream out(path);
    out << "a1,l,a2,y\n0,0,0\n";
  }
  CHECK_THROWS(LongitudinalDataset::read_csv(path));
  std::remove(path.c_str());
}

TEST_CASE("cell counts collapse matches the records") {
  LongitudinalDataset d;
  for (int i = 0; i < 5; ++i) d.push(1, 0, 1, 1);
  for (int i = 0; i < 3; ++i) d.push(0, 1, 0, 0);
  CellCounts c = CellCounts::from(d);
  CHECK(c.total == doctest::Approx(8.0));
  CHECK(c.at(1, 0, 1, 1) == doctest::Approx(5.0));
  CHECK(c.at(0, 1, 0, 0) == doctest::Approx(3.0));
  CHECK(c.at(0, 0, 0, 0) == doctest::Approx(0.0));
}

TEST_CASE("continuous csv round trip") {
  ContinuousDataset d;
  d.d = 2;
  d.x = {0.25, 0.75, 0.5, 0.125};
  d.a2 = {1, 0};
  d.y = {1.0, 0.0};
  d.validate();
  std::string path = tmp_path("cont.csv");
  d.write_csv(path);
  ContinuousDataset back = ContinuousDataset::read_csv(path);
  CHECK(back.d == 2);
  REQUIRE(back.size() == 2);
  CHECK(back.x == d.x);
  CHECK(back.a2 == d.a2);
  CHECK(back.y == d.y);
  std::remove(path.c_str());
}
