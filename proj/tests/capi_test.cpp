/*
 * Copyright 2026 The cbmx Authors.
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

// Exercises the shared library through the public C header only.

#include "cbmx/cbmx.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

std::string ReadAll(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> Lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

class CApiTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / "cbmx_capi_test");
    fs::remove_all(*dir_);
    fs::create_directories(*dir_);
    cbmx_gen_config gen;
    cbmx_gen_config_default(&gen);
    gen.height = gen.width = 16;
    gen.samples = 20;
    gen.seed = 5;
    ASSERT_EQ(cbmx_dataset_generate(&gen, &dataset_), CBMX_OK) << cbmx_last_error();
    cbmx_train_config train;
    cbmx_train_config_default(&train);
    train.epochs = 1;
    train.seed = 3;
    ASSERT_EQ(cbmx_model_train(dataset_, &train, &model_), CBMX_OK) << cbmx_last_error();
  }
  static void TearDownTestSuite() {
    cbmx_model_free(model_);
    cbmx_dataset_free(dataset_);
    fs::remove_all(*dir_);
    delete dir_;
  }

  static std::string Path(const char* name) { return (*dir_ / name).string(); }

  static fs::path* dir_;
  static cbmx_dataset* dataset_;
  static cbmx_model* model_;
};

fs::path* CApiTest::dir_ = nullptr;
cbmx_dataset* CApiTest::dataset_ = nullptr;
cbmx_model* CApiTest::model_ = nullptr;

TEST(CApiStatusTest, NamesAndDefaults) {
  EXPECT_STREQ(cbmx_status_name(CBMX_OK), "Ok");
  EXPECT_STREQ(cbmx_status_name(CBMX_BAD_MAGIC), "BadMagic");
  EXPECT_STREQ(cbmx_status_name(CBMX_CORRUPT_OFFSETS), "CorruptOffsets");
  EXPECT_STREQ(cbmx_status_name(static_cast<cbmx_status>(99)), "Unknown");
  cbmx_gen_config gen;
  cbmx_gen_config_default(&gen);
  EXPECT_EQ(gen.height, 64u);
  EXPECT_EQ(gen.parts, 3u);
  cbmx_attr_config attr;
  cbmx_attr_config_default(&attr);
  EXPECT_EQ(attr.method, CBMX_METHOD_LRP);
  EXPECT_EQ(attr.ig_steps, 50u);
  EXPECT_EQ(attr.smoothgrad_samples, 0u);
}

TEST(CApiStatusTest, InvalidConfigSetsLastError) {
  cbmx_gen_config gen;
  cbmx_gen_config_default(&gen);
  gen.samples = 1;
  cbmx_dataset* ds = nullptr;
  EXPECT_EQ(cbmx_dataset_generate(&gen, &ds), CBMX_CONFIG_INVALID);
  EXPECT_EQ(ds, nullptr);
  EXPECT_NE(std::string(cbmx_last_error()), "");
  EXPECT_EQ(cbmx_dataset_generate(nullptr, &ds), CBMX_INVALID_ARGUMENT);
  size_t n = 0;
  EXPECT_EQ(cbmx_dataset_size(nullptr, CBMX_SPLIT_TRAIN, &n), CBMX_INVALID_ARGUMENT);
}

TEST_F(CApiTest, DatasetQueries) {
  size_t train = 0, test = 0, concepts = 0, parts = 0, part = 0;
  ASSERT_EQ(cbmx_dataset_size(dataset_, CBMX_SPLIT_TRAIN, &train), CBMX_OK);
  EXPECT_STREQ(cbmx_last_error(), "");
  ASSERT_EQ(cbmx_dataset_size(dataset_, CBMX_SPLIT_TEST, &test), CBMX_OK);
  EXPECT_EQ(train, 16u);
  EXPECT_EQ(test, 4u);
  ASSERT_EQ(cbmx_dataset_num_concepts(dataset_, &concepts), CBMX_OK);
  ASSERT_EQ(cbmx_dataset_num_parts(dataset_, &parts), CBMX_OK);
  EXPECT_EQ(concepts, 12u);
  EXPECT_EQ(parts, 3u);
  ASSERT_EQ(cbmx_dataset_concept_part(dataset_, 1, &part), CBMX_OK);
  EXPECT_EQ(part, 1u);
  EXPECT_EQ(cbmx_dataset_concept_part(dataset_, 12, &part), CBMX_INDEX_OUT_OF_RANGE);
}

TEST_F(CApiTest, DatasetRoundTripIsBitwise) {
  ASSERT_EQ(cbmx_dataset_save(dataset_, Path("ds_a").c_str()), CBMX_OK) << cbmx_last_error();
  cbmx_dataset* loaded = nullptr;
  ASSERT_EQ(cbmx_dataset_load(Path("ds_a").c_str(), &loaded), CBMX_OK) << cbmx_last_error();
  ASSERT_EQ(cbmx_dataset_save(loaded, Path("ds_b").c_str()), CBMX_OK);
  EXPECT_EQ(ReadAll(*dir_ / "ds_a" / "dataset.cbx"), ReadAll(*dir_ / "ds_b" / "dataset.cbx"));
  cbmx_dataset_free(loaded);
}

TEST_F(CApiTest, ModelRoundTripAndHistory) {
  ASSERT_EQ(cbmx_model_save(model_, Path("m1.cbx").c_str()), CBMX_OK) << cbmx_last_error();
  cbmx_model* loaded = nullptr;
  ASSERT_EQ(cbmx_model_load(Path("m1.cbx").c_str(), &loaded), CBMX_OK) << cbmx_last_error();
  ASSERT_EQ(cbmx_model_save(loaded, Path("m2.cbx").c_str()), CBMX_OK);
  EXPECT_EQ(ReadAll(*dir_ / "m1.cbx"), ReadAll(*dir_ / "m2.cbx"));

  cbmx_metrics a{}, b{};
  ASSERT_EQ(cbmx_model_evaluate(model_, dataset_, CBMX_SPLIT_TEST, &a), CBMX_OK);
  ASSERT_EQ(cbmx_model_evaluate(loaded, dataset_, CBMX_SPLIT_TEST, &b), CBMX_OK);
  EXPECT_EQ(a.concept_accuracy, b.concept_accuracy);
  EXPECT_EQ(a.class_accuracy, b.class_accuracy);
  EXPECT_GE(a.concept_accuracy, 0.0);
  EXPECT_LE(a.concept_accuracy, 1.0);

  ASSERT_EQ(cbmx_model_write_history_csv(model_, Path("history.csv").c_str()), CBMX_OK);
  const std::vector<std::string> lines = Lines(*dir_ / "history.csv");
  ASSERT_EQ(lines.size(), 3u);  // header, one g epoch, one f epoch
  EXPECT_EQ(lines[0], "phase,epoch,loss,concept_accuracy,class_accuracy");
  EXPECT_EQ(cbmx_model_write_history_csv(loaded, Path("none.csv").c_str()), CBMX_EMPTY);
  cbmx_model_free(loaded);
}

TEST_F(CApiTest, LoadErrors) {
  cbmx_model* m = nullptr;
  EXPECT_EQ(cbmx_model_load(Path("missing.cbx").c_str(), &m), CBMX_IO_ERROR);
  std::ofstream(*dir_ / "junk.cbx") << "NOPE model 3\n{}";
  EXPECT_EQ(cbmx_model_load(Path("junk.cbx").c_str(), &m), CBMX_BAD_MAGIC);
  EXPECT_EQ(cbmx_model_load("", &m), CBMX_INVALID_ARGUMENT);
  EXPECT_EQ(m, nullptr);
}

TEST_F(CApiTest, ConceptMapShapeAndPeak) {
  cbmx_attr_config attr;
  cbmx_attr_config_default(&attr);
  cbmx_map* map = nullptr;
  ASSERT_EQ(cbmx_attribute(model_, dataset_, CBMX_SPLIT_TEST, 0, CBMX_TARGET_CONCEPT, 4, &attr,
                           &map),
            CBMX_OK)
      << cbmx_last_error();
  size_t dims[3], rank = 0;
  ASSERT_EQ(cbmx_map_shape(map, dims, &rank), CBMX_OK);
  EXPECT_EQ(rank, 3u);
  EXPECT_EQ(dims[0], 3u);
  EXPECT_EQ(dims[1], 16u);
  EXPECT_EQ(dims[2], 16u);

  const double* data = nullptr;
  size_t size = 0;
  ASSERT_EQ(cbmx_map_data(map, &data, &size), CBMX_OK);
  ASSERT_EQ(size, 3u * 16 * 16);
  // Positive-part channel sum, first maximum in row-major order.
  size_t best = 0;
  double best_value = -1.0;
  for (size_t p = 0; p < 256; ++p) {
    double s = 0.0;
    for (size_t c = 0; c < 3; ++c) s += std::max(0.0, data[c * 256 + p]);
    if (s > best_value) {
      best_value = s;
      best = p;
    }
  }
  size_t row = 0, col = 0;
  ASSERT_EQ(cbmx_map_peak(map, &row, &col), CBMX_OK);
  EXPECT_EQ(row, best / 16);
  EXPECT_EQ(col, best % 16);

  cbmx_sign_pattern pattern;
  EXPECT_EQ(cbmx_map_sign_pattern(map, &pattern), CBMX_INVALID_ARGUMENT);
  ASSERT_EQ(cbmx_map_write_csv(map, Path("map.csv").c_str()), CBMX_OK);
  const std::vector<std::string> lines = Lines(*dir_ / "map.csv");
  ASSERT_EQ(lines.size(), 257u);
  EXPECT_EQ(lines[0], "row,col,saliency");
  ASSERT_EQ(cbmx_map_write_ppm(map, Path("map.ppm").c_str()), CBMX_OK);
  EXPECT_EQ(ReadAll(*dir_ / "map.ppm").substr(0, 2), "P6");
  cbmx_map_free(map);
}

TEST_F(CApiTest, ClassMapSignPattern) {
  cbmx_attr_config attr;
  cbmx_attr_config_default(&attr);
  cbmx_map* map = nullptr;
  ASSERT_EQ(cbmx_attribute(model_, dataset_, CBMX_SPLIT_TRAIN, 2, CBMX_TARGET_CLASS, 1, &attr,
                           &map),
            CBMX_OK)
      << cbmx_last_error();
  size_t dims[3], rank = 0;
  ASSERT_EQ(cbmx_map_shape(map, dims, &rank), CBMX_OK);
  EXPECT_EQ(rank, 1u);
  EXPECT_EQ(dims[0], 12u);
  cbmx_sign_pattern p;
  ASSERT_EQ(cbmx_map_sign_pattern(map, &p), CBMX_OK);
  EXPECT_EQ(p.present_pos + p.present_neg + p.absent_pos + p.absent_neg + p.zero, 12u);

  const double* data = nullptr;
  size_t size = 0;
  ASSERT_EQ(cbmx_map_data(map, &data, &size), CBMX_OK);
  size_t best = 0;
  for (size_t k = 1; k < size; ++k) {
    if (data[k] > data[best]) best = k;
  }
  size_t row = 9, col = 9;
  ASSERT_EQ(cbmx_map_peak(map, &row, &col), CBMX_OK);
  EXPECT_EQ(row, 0u);
  EXPECT_EQ(col, best);

  ASSERT_EQ(cbmx_map_write_csv(map, Path("class.csv").c_str()), CBMX_OK);
  const std::vector<std::string> lines = Lines(*dir_ / "class.csv");
  ASSERT_EQ(lines.size(), 13u);
  EXPECT_EQ(lines[0], "concept_id,concept_name,relevance");
  EXPECT_EQ(lines[1].rfind("0,has_head::visible,", 0), 0u);
  cbmx_map_free(map);
}

TEST_F(CApiTest, AttributionArgumentErrors) {
  cbmx_attr_config attr;
  cbmx_attr_config_default(&attr);
  cbmx_map* map = nullptr;
  EXPECT_EQ(cbmx_attribute(model_, dataset_, CBMX_SPLIT_TEST, 0, CBMX_TARGET_CONCEPT, 12, &attr,
                           &map),
            CBMX_INDEX_OUT_OF_RANGE);
  EXPECT_EQ(cbmx_attribute(model_, dataset_, CBMX_SPLIT_TEST, 4, CBMX_TARGET_CONCEPT, 0, &attr,
                           &map),
            CBMX_INDEX_OUT_OF_RANGE);
  EXPECT_EQ(cbmx_attribute(model_, dataset_, CBMX_SPLIT_TEST, 0, CBMX_TARGET_CLASS, 8, &attr,
                           &map),
            CBMX_INDEX_OUT_OF_RANGE);
  attr.method = static_cast<cbmx_method>(7);
  EXPECT_EQ(cbmx_attribute(model_, dataset_, CBMX_SPLIT_TEST, 0, CBMX_TARGET_CONCEPT, 0, &attr,
                           &map),
            CBMX_INVALID_ARGUMENT);
  cbmx_attr_config_default(&attr);
  attr.method = CBMX_METHOD_IG;
  attr.ig_steps = 0;
  EXPECT_EQ(cbmx_attribute(model_, dataset_, CBMX_SPLIT_TEST, 0, CBMX_TARGET_CONCEPT, 0, &attr,
                           &map),
            CBMX_INVALID_ARGUMENT);
  EXPECT_EQ(map, nullptr);
}

TEST_F(CApiTest, SmoothGradIsSeedDeterministic) {
  cbmx_attr_config attr;
  cbmx_attr_config_default(&attr);
  attr.method = CBMX_METHOD_GRAD;
  attr.smoothgrad_samples = 4;
  attr.seed = 11;
  cbmx_map *a = nullptr, *b = nullptr;
  ASSERT_EQ(cbmx_attribute(model_, dataset_, CBMX_SPLIT_TEST, 1, CBMX_TARGET_CONCEPT, 2, &attr, &a),
            CBMX_OK);
  ASSERT_EQ(cbmx_attribute(model_, dataset_, CBMX_SPLIT_TEST, 1, CBMX_TARGET_CONCEPT, 2, &attr, &b),
            CBMX_OK);
  const double *da = nullptr, *db = nullptr;
  size_t na = 0, nb = 0;
  cbmx_map_data(a, &da, &na);
  cbmx_map_data(b, &db, &nb);
  ASSERT_EQ(na, nb);
  EXPECT_EQ(std::vector<double>(da, da + na), std::vector<double>(db, db + nb));
  cbmx_map_free(a);
  cbmx_map_free(b);
}

TEST_F(CApiTest, CsvWriters) {
  const cbmx_method methods[] = {CBMX_METHOD_LRP, CBMX_METHOD_GRAD};
  const size_t concepts[] = {0, 1, 2};
  const size_t parts[] = {0, 1, 2};
  ASSERT_EQ(cbmx_pointing_csv(model_, dataset_, CBMX_SPLIT_TEST, methods, 2, concepts, parts, 3, 2,
                              8, Path("pointing.csv").c_str()),
            CBMX_OK)
      << cbmx_last_error();
  std::vector<std::string> lines = Lines(*dir_ / "pointing.csv");
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "method,part_id,n_samples,n_skipped,mean_distance,shortest10_mean");
  EXPECT_EQ(cbmx_pointing_csv(model_, dataset_, CBMX_SPLIT_TEST, methods, 0, concepts, parts, 3,
                              2, 8, Path("x.csv").c_str()),
            CBMX_EMPTY);

  ASSERT_EQ(cbmx_contributions_csv(model_, dataset_, CBMX_SPLIT_TEST, 0, 1, 3,
                                   Path("contrib.csv").c_str()),
            CBMX_OK);
  lines = Lines(*dir_ / "contrib.csv");
  ASSERT_EQ(lines.size(), 13u);
  EXPECT_EQ(lines[0], "concept_id,concept_name,concept_value,relevancy,contribution_percent");

  const size_t indices[] = {0, 5};
  const double values[] = {1.0, 0.0};
  ASSERT_EQ(cbmx_intervene_csv(model_, dataset_, CBMX_SPLIT_TEST, 0, indices, values, 2,
                               Path("intervene.csv").c_str()),
            CBMX_OK);
  lines = Lines(*dir_ / "intervene.csv");
  ASSERT_EQ(lines.size(), 9u);
  EXPECT_EQ(lines[0], "class_id,class_name,old_prob,new_prob,delta");
  const size_t bad[] = {40};
  EXPECT_EQ(cbmx_intervene_csv(model_, dataset_, CBMX_SPLIT_TEST, 0, bad, values, 1,
                               Path("y.csv").c_str()),
            CBMX_INDEX_OUT_OF_RANGE);
}

TEST_F(CApiTest, ModelDatasetMismatch) {
  cbmx_gen_config gen;
  cbmx_gen_config_default(&gen);
  gen.height = gen.width = 32;
  gen.samples = 10;
  cbmx_dataset* other = nullptr;
  ASSERT_EQ(cbmx_dataset_generate(&gen, &other), CBMX_OK);
  cbmx_metrics m;
  EXPECT_EQ(cbmx_model_evaluate(model_, other, CBMX_SPLIT_TEST, &m), CBMX_SHAPE_MISMATCH);
  EXPECT_EQ(cbmx_serve(model_, other, CBMX_SPLIT_TEST, "127.0.0.1", 0), CBMX_SHAPE_MISMATCH);
  cbmx_dataset_free(other);
}

}  // namespace
