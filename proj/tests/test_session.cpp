#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "organichar/session.hpp"
#include "organichar/synthetic.hpp"

using namespace organichar;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("organichar_test_session_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& f, const std::string& text) {
  std::ofstream out(f, std::ios::binary);
  out << text;
}

ActivityScript short_script() {
  std::istringstream in(
      "# session: tiny\n"
      "activity,zone,start_s,duration_s,profile\n"
      "washing dishes with sponge,sink area,0,20,washing_dishes\n"
      "reading newspaper,dining table area,20,20,reading_newspaper,hand_freq=0.2\n");
  return parse_script(in, "tiny.txt");
}

template <class F>
ParseError expect_parse_error(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "no ParseError";
  return ParseError("", 0, 0, "");
}

}  // namespace

TEST(Script, ParsesHeaderStepsAndOverrides) {
  const auto s = short_script();
  EXPECT_EQ(s.session_id, "tiny");
  ASSERT_EQ(s.steps.size(), 2u);
  EXPECT_EQ(s.steps[1].activity, "reading newspaper");
  EXPECT_EQ(s.steps[1].zone, "dining table area");
  EXPECT_DOUBLE_EQ(s.steps[1].start_s, 20.0);
  EXPECT_DOUBLE_EQ(s.steps[1].profile.hand_freq, 0.2);
  EXPECT_DOUBLE_EQ(s.total_duration(), 40.0);
  EXPECT_EQ(s.step_at(25.0)->activity, "reading newspaper");
  EXPECT_EQ(s.step_at(40.0), nullptr);
}

TEST(Script, WriteThenParseRoundTrips) {
  const auto demo = demo_script(1, 7);
  std::ostringstream out;
  write_script(demo, out);
  std::istringstream in(out.str());
  const auto back = parse_script(in);
  EXPECT_EQ(back.session_id, demo.session_id);
  ASSERT_EQ(back.steps.size(), demo.steps.size());
  for (std::size_t i = 0; i < demo.steps.size(); ++i) {
    EXPECT_EQ(back.steps[i].activity, demo.steps[i].activity);
    EXPECT_EQ(back.steps[i].profile, demo.steps[i].profile);
    EXPECT_DOUBLE_EQ(back.steps[i].duration_s, demo.steps[i].duration_s);
  }
}

TEST(Script, ErrorsNameLineAndColumn) {
  auto e = expect_parse_error([] {
    std::istringstream in("activity,zone,start_s,duration_s,profile\nx,sink area,0,abc,idle\n");
    parse_script(in, "s.txt");
  });
  EXPECT_EQ(e.line(), 2u);
  EXPECT_EQ(e.column(), 4u);
  e = expect_parse_error([] {
    std::istringstream in("a,sink area,0,10,juggling\n");
    parse_script(in, "s.txt");
  });
  EXPECT_EQ(e.column(), 5u);
  e = expect_parse_error([] {
    std::istringstream in("a,z,0,10,idle\nb,z,5,10,idle\n");
    parse_script(in, "s.txt");
  });
  EXPECT_NE(std::string(e.what()).find("overlaps"), std::string::npos);
}

TEST(Synthetic, DeterministicPerSeed) {
  const auto script = short_script();
  const auto a = generate_synthetic_session(script, 5);
  const auto b = generate_synthetic_session(script, 5);
  const auto c = generate_synthetic_session(script, 6);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  EXPECT_EQ(a.modalities.size(), 6u);
  ASSERT_TRUE(a.ground_truth.has_value());
  EXPECT_EQ(a.ground_truth->size(), 2u);
  EXPECT_EQ(a.activity_at(30.0).value(), "reading newspaper");
  EXPECT_FALSE(a.activity_at(41.0).has_value());
}

TEST(Synthetic, ValidatesCleanly) {
  const auto s = generate_synthetic_session(short_script(), 5);
  const auto report = validate_session(s);
  for (const auto& f : report.findings) ADD_FAILURE() << f.message;
  for (auto m : kAllModalities) {
    const auto& g = report.gaps.at(m);
    EXPECT_NEAR(1.0 / g.median_dt, nominal_rate_hz(m), kRateTolerance * nominal_rate_hz(m));
  }
}

TEST(SessionIo, RoundTripIsExact) {
  const auto s = generate_synthetic_session(short_script(), 9);
  const auto dir = fresh_dir("roundtrip");
  write_session(s, dir);
  const auto back = load_session(dir);
  EXPECT_EQ(back.session_id, s.session_id);
  EXPECT_DOUBLE_EQ(back.duration_s, s.duration_s);
  for (const auto& [m, series] : s.modalities) {
    ASSERT_TRUE(back.has(m));
    EXPECT_TRUE(back.modalities.at(m) == series) << modality_name(m);
  }
  EXPECT_EQ(back.ground_truth, s.ground_truth);
}

TEST(SessionIo, DopplerRowsSharingTimestampFormOneFrame) {
  const auto dir = fresh_dir("doppler");
  write_text(dir / "doppler.csv",
             "t,range_m,velocity_mps,intensity\n"
             "0.000000,1.5,0.2,10\n"
             "0.000000,2.5,-0.1,5\n"
             "0.200000,1.0,0,3\n");
  const auto s = load_session(dir);
  const auto& d = s.modalities.at(Modality::doppler);
  ASSERT_EQ(d.samples.size(), 2u);
  EXPECT_EQ(d.samples[0].values, (std::vector<double>{1.5, 0.2, 10, 2.5, -0.1, 5}));
  EXPECT_DOUBLE_EQ(s.duration_s, 0.2);
  EXPECT_EQ(s.session_id, "organichar_test_session_doppler");
  EXPECT_FALSE(s.ground_truth.has_value());
}

TEST(SessionIo, MalformedFilesReportLocation) {
  const auto dir = fresh_dir("bad");
  write_text(dir / "imu.csv", "t,ax,ay,az,gx,gy,gz\n0.0,1,2,3,4,5,6\n0.02,1,2,x,4,5,6\n");
  auto e = expect_parse_error([&] { load_session(dir); });
  EXPECT_EQ(e.line(), 3u);
  EXPECT_EQ(e.column(), 4u);

  write_text(dir / "imu.csv", "t,ax,ay,az,gx,gy,gz\n0.04,1,2,3,4,5,6\n0.02,1,2,3,4,5,6\n");
  e = expect_parse_error([&] { load_session(dir); });
  EXPECT_EQ(e.line(), 3u);
  EXPECT_NE(std::string(e.what()).find("non-monotonic"), std::string::npos);

  write_text(dir / "imu.csv", "t,ax,ay,az,gx,gy,gz\n0.0,1,2,3\n");
  e = expect_parse_error([&] { load_session(dir); });
  EXPECT_EQ(e.line(), 2u);

  write_text(dir / "imu.csv", "t,a,b\n");
  e = expect_parse_error([&] { load_session(dir); });
  EXPECT_EQ(e.line(), 1u);
}

TEST(SessionIo, MissingDirectoryOrData) {
  EXPECT_THROW(load_session(fs::temp_directory_path() / "organichar_does_not_exist"), Error);
  const auto dir = fresh_dir("empty");
  EXPECT_THROW(load_session(dir), Error);
}

TEST(Validation, FlagsOrderRangeArityAndRate) {
  Session s;
  s.session_id = "v";
  s.duration_s = 1.0;
  SampleSeries imu{Modality::imu, 50.0, {}};
  imu.samples.push_back({0.0, std::vector<double>(6, 0.0)});
  imu.samples.push_back({0.5, std::vector<double>(6, 0.0)});
  imu.samples.push_back({0.4, std::vector<double>(5, 0.0)});
  imu.samples.push_back({2.0, std::vector<double>(6, 0.0)});
  s.modalities[Modality::imu] = imu;
  s.modalities[Modality::pose] = {Modality::pose, 7.0, {}};
  const auto r = validate_session(s);
  std::set<Finding::Kind> kinds;
  for (const auto& f : r.findings) kinds.insert(f.kind);
  EXPECT_TRUE(kinds.count(Finding::Kind::non_monotonic));
  EXPECT_TRUE(kinds.count(Finding::Kind::out_of_range));
  EXPECT_TRUE(kinds.count(Finding::Kind::arity));
  EXPECT_TRUE(kinds.count(Finding::Kind::rate_deviation));
  EXPECT_TRUE(kinds.count(Finding::Kind::empty_series));
  EXPECT_DOUBLE_EQ(r.gaps.at(Modality::imu).max_gap, 1.6);
}

TEST(DemoCorpus, EarlySessionsCoverFewerActivities) {
  const auto scripts = demo_corpus_scripts(10, 7);
  ASSERT_EQ(scripts.size(), 10u);
  EXPECT_EQ(scripts[0].session_id, "session-01");
  EXPECT_EQ(scripts[0].steps.size(), 4u);
  EXPECT_EQ(scripts[1].steps.size(), 6u);
  EXPECT_EQ(scripts[9].steps.size(), kPlantedActivities.size());
  for (const auto& s : scripts) EXPECT_NO_THROW(validate_script(s));
}
