#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "rupi/dataio.hpp"

using namespace rupi;
namespace fs = std::filesystem;

namespace {

RawSeries series(const std::string& id, std::vector<std::vector<double>> ch,
                 std::vector<std::string> names = {}) {
  RawSeries s;
  s.subject_id = id;
  for (std::size_t t = 0; t < ch.front().size(); ++t) s.timestamps.push_back(static_cast<std::int64_t>(t));
  if (names.empty())
    for (std::size_t c = 0; c < ch.size(); ++c) names.push_back("c" + std::to_string(c));
  s.channel_names = names;
  s.channels = std::move(ch);
  return s;
}

std::vector<double> steps(int n, double start = 1.0) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(start + i);
  return v;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("rupi_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(LoadCsv, TwoSubjectsTenRows) {
  std::stringstream csv;
  csv << "subject,timestamp,a,b,c\n";
  for (int i = 0; i < 10; ++i) {
    csv << "p1," << i * 60 << "," << i << ",1,2\n";
    csv << "p2," << i * 60 << "," << -i << ",3,4\n";
  }
  const auto s = load_csv(csv, {"a", "b", "c"});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].subject_id, "p1");
  EXPECT_EQ(s[0].size(), 10u);
  EXPECT_EQ(s[1].size(), 10u);
  EXPECT_EQ(s[1].channels[0][9], -9.0);
}

TEST(LoadCsv, ResortsStablyAgainstScriptedOracle) {
  const std::vector<std::pair<std::int64_t, double>> rows{{5, 1}, {3, 2}, {5, 3}, {1, 4}, {3, 5}, {0, 6}};
  std::stringstream csv;
  csv << "subject,timestamp,x\n";
  for (auto [t, v] : rows) csv << "s," << t << "," << v << "\n";
  auto oracle = rows;
  std::stable_sort(oracle.begin(), oracle.end(), [](auto a, auto b) { return a.first < b.first; });
  const auto s = load_csv(csv, {"x"});
  ASSERT_EQ(s.size(), 1u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(s[0].timestamps[i], oracle[i].first);
    EXPECT_EQ(s[0].channels[0][i], oracle[i].second);
  }
}

TEST(LoadCsv, EmptyBodyAndErrors) {
  std::stringstream empty("subject,timestamp,x\n");
  EXPECT_TRUE(load_csv(empty, {"x"}).empty());

  std::stringstream missing("subject,timestamp,x\n");
  EXPECT_THROW(load_csv(missing, {"y"}), SchemaError);

  std::stringstream bad("subject,timestamp,x\ns,0,1\ns,60,abc\n");
  try {
    load_csv(bad, {"x"});
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  std::stringstream short_row("subject,timestamp,x\ns,0\n");
  EXPECT_THROW(load_csv(short_row, {"x"}), ParseError);
}

TEST(ParseTimestamp, EpochAndIso) {
  EXPECT_EQ(*parse_timestamp("3600"), 3600);
  EXPECT_EQ(*parse_timestamp("1970-01-01T01:00:00Z"), 3600);
  EXPECT_EQ(*parse_timestamp("1970-01-02"), 86400);
  EXPECT_EQ(*parse_timestamp("2020-03-01 12:30:15+01:00"), 1583062215);
  EXPECT_FALSE(parse_timestamp("2020-02-30").has_value());
  EXPECT_FALSE(parse_timestamp("yesterday").has_value());
}

TEST(Preprocess, FloorCeilingAndMissing) {
  auto s = series("a", {{1, -1, 3, 4}, {100, 100, 260, std::nan("")}}, {"hr", "bp"});
  PreprocessConfig cfg;
  cfg.value_floor = 0.0;
  cfg.value_ceilings["bp"] = 250;
  const auto out = preprocess(s, cfg);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out.channels[0][0], 1.0);

  cfg.value_floor.reset();
  cfg.value_ceilings.clear();
  cfg.drop_missing = false;
  EXPECT_EQ(preprocess(s, cfg).size(), 4u);
  PreprocessConfig bad;
  bad.value_ceilings = {{"x", INFINITY}};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Preprocess, ResampleMeanMatchesHandAverage) {
  std::vector<double> v(60);
  double sum = 0;
  for (int i = 0; i < 60; ++i) {
    v[static_cast<std::size_t>(i)] = std::sin(i * 0.37) * 10 + i * 0.5;
    sum += v[static_cast<std::size_t>(i)];
  }
  auto s = series("a", {v});
  PreprocessConfig cfg;
  cfg.resample_period = 60;
  const auto out = preprocess(s, cfg);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out.channels[0][0], sum / 60.0, 1e-12);
  EXPECT_EQ(out.timestamps[0], 0);

  // global mean of fully covered buckets is preserved
  std::vector<double> w(120);
  for (int i = 0; i < 120; ++i) w[static_cast<std::size_t>(i)] = i * i * 0.01;
  const auto r = resample(series("b", {w}), 30, {Stat::mean});
  double raw = 0, agg = 0;
  for (double x : w) raw += x;
  for (double x : r.channels[0]) agg += x;
  EXPECT_NEAR(raw / 120.0, agg / 4.0, 1e-12);

  const auto both = resample(series("c", {{1, 3, 5, 7}}), 2, {Stat::mean, Stat::std});
  EXPECT_EQ(both.channel_names, (std::vector<std::string>{"c0", "c0_std"}));
  EXPECT_EQ(both.channels[0], (std::vector<double>{2, 6}));
  EXPECT_NEAR(both.channels[1][0], std::sqrt(2.0), 1e-15);
}

TEST(Preprocess, EmptyResultIsNotAnError) {
  auto s = series("a", {{-1, -2}});
  PreprocessConfig cfg;
  cfg.value_floor = 0.0;
  EXPECT_EQ(preprocess(s, cfg).size(), 0u);
}

TEST(Normalizer, ConstantChannelAndRoundTrip) {
  const std::vector<RawSeries> all{series("tr", {{5, 5, 5}, {1, 2, 3}}), series("te", {{7, 8, 9}, {100, 200, 300}})};
  const auto n = Normalizer::fit(all, {"tr"}, Normalization::zscore);
  EXPECT_EQ(n.scale[0], 1.0);
  EXPECT_EQ(n.offset[1], 2.0);
  const auto z = n.apply(all[0]);
  EXPECT_EQ(z.channels[0], (std::vector<double>{0, 0, 0}));

  const auto back = n.invert(n.apply(all[1]));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 3; ++t)
      EXPECT_NEAR(back.channels[c][t], all[1].channels[c][t], 1e-12 * std::fabs(all[1].channels[c][t]));

  const auto mm = Normalizer::fit(all, {"tr"}, Normalization::minmax);
  EXPECT_EQ(mm.apply(all[0]).channels[1], (std::vector<double>{0, 0.5, 1}));
}

TEST(Windowize, CountsAndLayout) {
  const SplitAssignment a{{"s1", Split::train}, {"s2", Split::test}};
  const auto ds = windowize({series("s1", {steps(9)})}, 6, 3, {"c0"}, a);
  ASSERT_EQ(ds.rows(), 1);
  EXPECT_EQ(ds.inputs(0, 0), 1.0);
  EXPECT_EQ(ds.inputs(0, 5), 6.0);
  EXPECT_EQ(ds.targets(0, 2), 9.0);

  const auto tiny = windowize({series("s1", {steps(2)})}, 1, 1, {"c0"}, a);
  ASSERT_EQ(tiny.rows(), 1);
  EXPECT_EQ(tiny.inputs(0, 0), 1.0);
  EXPECT_EQ(tiny.targets(0, 0), 2.0);

  const auto two = windowize({series("s1", {steps(9)}), series("s2", {steps(9, 100)})}, 6, 3, {"c0"}, a);
  ASSERT_EQ(two.rows(), 2);
  EXPECT_EQ(two.subject[0], "s1");
  EXPECT_EQ(two.subject[1], "s2");
  EXPECT_EQ(two.split[1], Split::test);
  EXPECT_GE(two.inputs.row(1).minCoeff(), 100.0);

  const auto skipped = windowize({series("s1", {steps(8)})}, 6, 3, {"c0"}, a);
  EXPECT_EQ(skipped.rows(), 0);
}

TEST(Windowize, ChannelMajorMultiChannel) {
  const SplitAssignment a{{"s", Split::train}};
  const auto ds = windowize({series("s", {steps(5), steps(5, 10)})}, 2, 2, {"c1"}, a);
  // anchors t = 1, 2 (0-based)
  ASSERT_EQ(ds.rows(), 2);
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"c0@t-1", "c0@t-0", "c1@t-1", "c1@t-0"}));
  EXPECT_EQ(ds.target_names, (std::vector<std::string>{"c1@t+1", "c1@t+2"}));
  EXPECT_EQ(ds.inputs.row(0), (Vector(4) << 1, 2, 10, 11).finished().transpose());
  EXPECT_EQ(ds.targets.row(0), (Vector(2) << 12, 13).finished().transpose());
  EXPECT_EQ(ds.target_horizon(1), 2);
}

TEST(Windowize, NeverMixesSubjects) {
  SyntheticSpec spec;
  spec.n_subjects = 6;
  spec.steps_per_subject = 30;
  const auto raw = generate_synthetic(spec);
  SplitAssignment a;
  for (const auto& s : raw) a[s.subject_id] = Split::train;
  const auto ds = windowize(raw, 4, 2, raw.front().channel_names, a);
  // each subject contributes steps - W - H + 1 consecutive windows
  EXPECT_EQ(ds.rows(), 6 * (30 - 4 - 2 + 1));
  for (Eigen::Index i = 1; i < ds.rows(); ++i) {
    if (ds.subject[static_cast<std::size_t>(i)] != ds.subject[static_cast<std::size_t>(i - 1)]) continue;
    // consecutive windows of one subject overlap by W - 1 steps
    EXPECT_EQ(ds.inputs(i, 0), ds.inputs(i - 1, 1));
  }
}

TEST(SplitBySubject, SizesDeterminismAndPartition) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("p" + std::to_string(i));
  const auto a = split_by_subject(ids, {0.7, 0.1, 0.2}, 42);
  std::map<Split, int> count;
  for (const auto& [id, s] : a) ++count[s];
  EXPECT_EQ(count[Split::train], 7);
  EXPECT_EQ(count[Split::validation], 1);
  EXPECT_EQ(count[Split::test], 2);
  EXPECT_EQ(a.size(), 10u);
  EXPECT_EQ(split_by_subject(ids, {0.7, 0.1, 0.2}, 42), a);

  auto reversed = ids;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(split_by_subject(reversed, {0.7, 0.1, 0.2}, 42), a);

  for (const auto& [id, s] : split_by_subject(ids, {1, 0, 0}, 1)) EXPECT_EQ(s, Split::train);
  EXPECT_THROW(split_by_subject({"a", "b"}, {0.7, 0.1, 0.2}, 1), DataError);
  EXPECT_THROW(split_by_subject(ids, {0.5, 0.1, 0.1}, 1), ConfigError);
}

TEST(Synthetic, ShiftMovesTestMeans) {
  for (double shift : {0.0, 3.0}) {
    double diff_sum = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SyntheticSpec spec;
      spec.shift_magnitude = shift;
      spec.seed = seed;
      const auto raw = generate_synthetic(spec);
      const auto a = split_by_subject(subject_ids(raw), spec.fractions, seed);
      double tr = 0, te = 0;
      std::size_t ntr = 0, nte = 0;
      for (const auto& s : raw)
        for (const auto& ch : s.channels)
          for (double v : ch) {
            if (a.at(s.subject_id) == Split::test) {
              te += v;
              ++nte;
            } else if (a.at(s.subject_id) == Split::train) {
              tr += v;
              ++ntr;
            }
          }
      diff_sum += te / static_cast<double>(nte) - tr / static_cast<double>(ntr);
    }
    EXPECT_NEAR(diff_sum / 5.0, shift, 0.4) << shift;
  }
}

TEST(Synthetic, DeterministicAndValidated) {
  SyntheticSpec spec;
  spec.seed = 9;
  std::stringstream a, b;
  write_csv(a, generate_synthetic(spec));
  write_csv(b, generate_synthetic(spec));
  EXPECT_EQ(a.str(), b.str());
  spec.noise_scale_fn = "quadratic";
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
  spec.noise_scale_fn = "periodic";
  spec.n_subjects = 0;
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
}

TEST(Dataset, BuildSaveLoadAndLeakageGuard) {
  SyntheticSpec spec;
  spec.n_subjects = 10;
  spec.steps_per_subject = 40;
  spec.seed = 3;
  DatasetRecipe r;
  r.seed = 3;
  const auto ds = build_dataset(generate_synthetic(spec), r);
  EXPECT_EQ(ds.inputs.cols(), 18);
  EXPECT_EQ(ds.targets.cols(), 9);
  EXPECT_FALSE(ds.inputs.hasNaN());

  // normalizer fitted on training subjects only: train-split inputs have mean ≈ 0
  const Matrix tr = ds.input_rows(Split::train);
  EXPECT_NEAR(tr.mean(), 0.0, 0.1);

  const auto dir = scratch("dataset");
  save_dataset(dir, ds);
  const auto full = load_dataset(dir, true);
  EXPECT_EQ(full.inputs, ds.inputs);
  EXPECT_EQ(full.targets, ds.targets);
  EXPECT_EQ(full.split, ds.split);
  EXPECT_EQ(full.normalizer->scale, ds.normalizer->scale);

  const auto guarded = load_dataset(dir, false);
  EXPECT_TRUE(guarded.target_rows(Split::test).array().isNaN().all());
  EXPECT_EQ(guarded.target_rows(Split::validation), ds.target_rows(Split::validation));
  fs::remove_all(dir);
}
