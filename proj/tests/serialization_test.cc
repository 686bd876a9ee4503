/*
 * Copyright 2026 The Fidelity Eval Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fidelity/serialization.h"

#include <algorithm>
#include <limits>

#include "fidelity/errors.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace fidelity {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(FormatDoubleTest, RoundTripsExactly) {
  RandomEngine rng(1);
  std::uniform_real_distribution<double> value(-1e6, 1e6);
  for (int t = 0; t < 1000; ++t) {
    const double v = value(rng);
    EXPECT_EQ(std::stod(FormatDouble(v)), v);
  }
  EXPECT_EQ(FormatDouble(0.1), "0.1");
  EXPECT_EQ(FormatDouble(2.0), "2.0");
}

TEST(ModelJsonTest, TreeRoundTripPredictsBitForBit) {
  RandomEngine rng(2);
  for (const Task task : {Task::kRegression, Task::kClassification}) {
    const Model model = testing::RandomTree(rng, 6, 7, task);
    const Model back = ModelFromJson(Json::parse(ModelToJson(model).dump()));
    ASSERT_TRUE(std::holds_alternative<DecisionTree>(back));
    EXPECT_EQ(std::get<DecisionTree>(back).task(), task);
    for (int t = 0; t < 200; ++t) {
      const Instance x = testing::RandomInstance(rng, 6);
      EXPECT_EQ(Predict(back, x), Predict(model, x));
    }
  }
}

TEST(ModelJsonTest, EnsembleRoundTripPredictsBitForBit) {
  RandomEngine rng(3);
  const Model model = testing::RandomEnsemble(rng, 5, 20, 4, Task::kClassification);
  const Model back = ModelFromJson(Json::parse(ModelToJson(model).dump()));
  ASSERT_TRUE(std::holds_alternative<TreeEnsemble>(back));
  for (int t = 0; t < 200; ++t) {
    const Instance x = testing::RandomInstance(rng, 5);
    EXPECT_EQ(Predict(back, x), Predict(model, x));
    EXPECT_EQ(PredictMargin(back, x), PredictMargin(model, x));
  }
  EXPECT_EQ(ModelToJson(back), ModelToJson(model));
}

TEST(ModelJsonTest, MalformedDocumentsAreDataErrors) {
  EXPECT_THROW(ModelFromJson(Json::parse(R"({"kind":"forest"})")), DataError);
  EXPECT_THROW(ModelFromJson(Json::parse(R"({"kind":"tree"})")), DataError);
  EXPECT_THROW(ModelFromJson(Json::parse(
                   R"({"kind":"tree","task":"regression","num_features":1,
                       "root":{"feature":0,"threshold":"x","cover":1}})")),
               DataError);
  EXPECT_THROW(ModelFromJson(Json::parse("[1,2]")), DataError);
}

TEST(DatasetJsonTest, RoundTrip) {
  Dataset d = testing::SyntheticDataset(25, 4, Task::kClassification, 4, true);
  d.schema[3].source_categorical = "colour";
  const Dataset back = DatasetFromJson(Json::parse(DatasetToJson(d).dump()));
  EXPECT_EQ(back, d);
}

TEST(DatasetJsonTest, MalformedIsDataError) {
  EXPECT_THROW(DatasetFromJson(Json::parse(R"({"schema":[]})")), DataError);
  EXPECT_THROW(DatasetFromJson(Json::parse("3")), DataError);
}

TEST(IntervalJsonTest, InfiniteBoundsAreNull) {
  const FeatureIntervalMap intervals = {{0, {-kInf, 127.5}}, {3, {0.25, kInf}},
                                        {5, {1.0, 1.0}}};
  const Json json = IntervalsToJson(intervals);
  const std::string text = json.dump();
  EXPECT_EQ(text.find("inf"), std::string::npos);
  EXPECT_NE(text.find("null"), std::string::npos);
  EXPECT_EQ(IntervalsFromJson(Json::parse(text)), intervals);
}

TEST(ExplanationJsonTest, RoundTrip) {
  Explanation e;
  e.weights = {0.5, -0.25, 0.0};
  e.explained_output = 0.7;
  e.base_value = 0.3;
  e.intervals = FeatureIntervalMap{{1, {-kInf, 2.0}}};
  const Explanation back = ExplanationFromJson(Json::parse(ExplanationToJson(e).dump()));
  EXPECT_EQ(back.weights, e.weights);
  EXPECT_EQ(back.explained_output, e.explained_output);
  EXPECT_EQ(back.base_value, e.base_value);
  EXPECT_EQ(back.intervals, e.intervals);

  Explanation bare;
  bare.weights = {1.0};
  const Explanation bare_back = ExplanationFromJson(ExplanationToJson(bare));
  EXPECT_FALSE(bare_back.intervals.has_value());
  EXPECT_FALSE(bare_back.base_value.has_value());
}

TEST(ReportCsvTest, Phase1Columns) {
  Phase1Report report;
  Phase1Record ok;
  ok.instance_id = 0;
  ok.recall = 1.0;
  ok.precision = 0.5;
  ok.n_used = 2;
  ok.true_feature_count = 1;
  Phase1Record skipped;
  skipped.instance_id = 1;
  skipped.skip_reason = "all_zero_explanation";
  report.records = {ok, skipped};
  EXPECT_EQ(Phase1ReportToCsv(report),
            "instance_id,recall,precision,n_used,true_feature_count,skip_reason\n"
            "0,1.0,0.5,2,1,\n"
            "1,,,0,0,all_zero_explanation\n");
}

TEST(ReportCsvTest, Phase3Columns) {
  Phase3Report report;
  Phase3Record r;
  r.instance_id = 4;
  r.supporting = 0.75;
  r.contrary = 0.25;
  r.y_original = 0.8;
  r.selected_features = {1, 3};
  r.skipped_features = {3};
  report.records = {r};
  const std::string csv = Phase3ReportToCsv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "instance_id,supporting,contrary,y_original,selected_features,skipped_features,"
            "supporting_excluded,contrary_excluded");
  EXPECT_NE(csv.find("4,0.75,0.25,0.8,1 3,3,,"), std::string::npos);
}

TEST(ReportCsvTest, Phase2CurvesLongFormat) {
  DecileSearchResult deciles;
  for (int d = 0; d < kNumDeciles; ++d) deciles.per_d_scores[d] = 0.1 * (d + 1);
  deciles.optimal_d = 9;
  BinSearchResult bins;
  bins.candidate_ps = {0.05, 0.1};
  bins.per_p_distances = {0.2, 0.1};
  bins.optimal_p = 0.1;
  const std::string csv = Phase2CurvesToCsv(deciles, bins);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "curve,parameter,value");
  EXPECT_NE(csv.find("decile_f1,1,"), std::string::npos);
  EXPECT_NE(csv.find("bin_distance,0.05,0.2"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + kNumDeciles + 2);

  const Json json = Phase2ReportToJson(deciles, std::nullopt);
  EXPECT_EQ(json["optimal_d"], 9);
  EXPECT_TRUE(json["optimal_p"].is_null());
}

TEST(FileIoTest, JsonFileRoundTripAndErrors) {
  testing::TempDir dir("fidelity-ser");
  const Json doc = {{"a", 1}, {"b", {1.5, 2.5}}};
  WriteJsonFile(dir.str("x.json"), doc);
  EXPECT_EQ(ReadJsonFile(dir.str("x.json")), doc);
  EXPECT_EQ(ReadTextFile(dir.str("x.json")).back(), '\n');
  WriteTextFile(dir.str("bad.json"), "{not json");
  EXPECT_THROW(ReadJsonFile(dir.str("bad.json")), DataError);
  EXPECT_THROW(ReadTextFile(dir.str("missing.json")), DataError);
}

}  // namespace
}  // namespace fidelity
