#include "clusterlearn/io.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace clusterlearn;
using namespace clusterlearn::io;

namespace {

CsvTable parse(const std::string& s) {
  std::istringstream is(s);
  return read_csv(is);
}

SchemaFile simple_schema() {
  SchemaFile sf;
  sf.columns = {{"color", ColumnRole::categorical, {}}, {"x", ColumnRole::continuous, {}}, {"y", ColumnRole::response, {}}};
  return sf;
}

}  // namespace

TEST(Csv, QuotedFieldsAndLineEndings) {
  auto t = parse("a,b,c\r\n1,\"x, y\",\"say \"\"hi\"\"\"\r\n2,\"two\nlines\",\r\n");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][1], "x, y");
  EXPECT_EQ(t.rows[0][2], "say \"hi\"");
  EXPECT_EQ(t.rows[1][1], "two\nlines");
  EXPECT_EQ(t.rows[1][2], "");
  EXPECT_EQ(*t.column("c"), 2u);
}

TEST(Csv, NoTrailingNewlineAndBlankLines) {
  auto t = parse("a,b\n\n1,2\n3,4");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "4");
}

TEST(Csv, Errors) {
  EXPECT_THROW(parse(""), DataError);
  EXPECT_THROW(parse("a,b\n1\n"), DataError);
  EXPECT_THROW(parse("a\n\"open\n"), DataError);
  EXPECT_THROW(parse("a\nx\"y\n"), DataError);
}

TEST(Csv, WriteQuotesWhenNeeded) {
  std::ostringstream os;
  write_csv_row(os, {"plain", "a,b", "q\"x", ""});
  EXPECT_EQ(os.str(), "plain,\"a,b\",\"q\"\"x\",\n");
  auto back = parse("h1,h2,h3,h4\n" + os.str());
  EXPECT_EQ(back.rows[0], (std::vector<std::string>{"plain", "a,b", "q\"x", ""}));
}

TEST(LoadDataset, InfersNumericLevelOrder) {
  auto t = parse("hour,temp,cnt,ignored\n10,0.5,3,z\n2,0.1,4,z\n1,0.2,5,z\n2,0.3,6,z\n");
  SchemaFile sf;
  sf.columns = {{"hour", ColumnRole::categorical, {}}, {"temp", ColumnRole::continuous, {}}, {"cnt", ColumnRole::response, {}}};
  auto ds = load_dataset(t, sf);
  EXPECT_EQ(ds.schema().predictor(0).levels, (std::vector<std::string>{"1", "2", "10"}));
  EXPECT_EQ(ds.code(0, 0), 2u);
  EXPECT_EQ(ds.schema().continuous_names(), (std::vector<std::string>{"temp"}));
  EXPECT_EQ(ds.y()[3], 6.0);
}

TEST(LoadDataset, FixedLevelsAndUnknownLabels) {
  auto sf = simple_schema();
  sf.columns[0].levels = {"red", "green"};
  auto ds = load_dataset(parse("color,x,y\ngreen,1,2\nred,1,3\n"), sf);
  EXPECT_EQ(ds.code(0, 0), 1u);
  EXPECT_EQ(ds.level_count(0, 0), 1u);
  EXPECT_THROW(load_dataset(parse("color,x,y\nblue,1,2\n"), sf), DataError);
}

TEST(LoadDataset, Errors) {
  auto sf = simple_schema();
  EXPECT_THROW(load_dataset(parse("color,x,y\nred,,2\n"), sf), DataError);
  EXPECT_THROW(load_dataset(parse("color,x,y\nred,abc,2\n"), sf), DataError);
  EXPECT_THROW(load_dataset(parse("color,y\nred,2\n"), sf), DataError);
  EXPECT_THROW(load_dataset(parse("color,x,y\n"), sf), DataError);
  sf.task = Task::binary;
  EXPECT_THROW(load_dataset(parse("color,x,y\nred,1,0\n"), sf), DataError);
  EXPECT_NO_THROW(load_dataset(parse("color,x,y\nred,1,-1\nblue,2,1\n"), sf));
}

TEST(SchemaFile, JsonRoundTrip) {
  auto sf = simple_schema();
  sf.task = Task::binary;
  sf.columns[0].levels = {"a", "b"};
  auto back = SchemaFile::from_json(sf.to_json());
  EXPECT_EQ(back.to_json(), sf.to_json());
  EXPECT_THROW(SchemaFile::from_json(json::parse(R"({"columns":[{"name":"a","role":"weird"}]})")), DataError);
  EXPECT_THROW(SchemaFile::from_json(json::parse(R"({"columns":[{"name":"a","role":"categorical"}]})")), DataError);
  EXPECT_THROW(SchemaFile::from_json(json::parse(R"({"task":"ranking","columns":[]})")), DataError);
}

TEST(WriteDataset, ReadsBackExactly) {
  std::mt19937_64 rng(1);
  auto ds = testutil::random_dataset(rng, 25, {3, 4}, 2);
  std::ostringstream os;
  write_dataset(os, ds);
  auto back = load_dataset(parse(os.str()), schema_file_of(ds));
  EXPECT_EQ(back.all_codes(), ds.all_codes());
  EXPECT_EQ(back.y(), ds.y());
  EXPECT_EQ(back.continuous(), ds.continuous());
  EXPECT_EQ(back.schema().predictor(1).levels, ds.schema().predictor(1).levels);
}

TEST(Coefficients, JsonRoundTrip) {
  std::mt19937_64 rng(2);
  auto s = testutil::schema_for({3, 2}, 1);
  auto c = testutil::random_coefficients(rng, s);
  auto j = coefficients_to_json(c, s);
  auto s2 = schema_from_coefficients(json::parse(j.dump()));
  EXPECT_EQ(s2.predictor(0).levels, s.predictor(0).levels);
  EXPECT_EQ(s2.continuous_names(), s.continuous_names());
  auto back = coefficients_from_json(json::parse(j.dump()), s2);
  EXPECT_EQ(back.categorical, c.categorical);
  EXPECT_EQ(back.continuous, c.continuous);
  EXPECT_EQ(back.alpha, c.alpha);
}

TEST(Coefficients, TwelveDigitsKeepClusters) {
  auto s = testutil::schema_for({3});
  auto c = Coefficients::zeros(s);
  c.categorical[0] = {0.1 + 0.2, 0.1 + 0.2, 1.0 / 3.0};
  auto j = coefficients_to_json(c, s);
  EXPECT_EQ(j["categorical"]["C1"]["L1"].dump(), "0.3");
  auto back = coefficients_from_json(j, s);
  EXPECT_EQ(back.categorical[0][0], back.categorical[0][1]);
  EXPECT_EQ(distinct_count(back.categorical[0]), 2u);
}

TEST(Coefficients, MissingEntriesAreErrors) {
  auto s = testutil::schema_for({2});
  EXPECT_THROW(coefficients_from_json(json::parse(R"({"alpha":0,"categorical":{"C1":{"L1":1}}})"), s), DataError);
  EXPECT_THROW(schema_from_coefficients(json::parse(R"({"alpha":0})")), DataError);
}

TEST(Format, TwelveSignificantDigits) {
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(format_number(123456789012345.0), "1.23456789012e+14");
  EXPECT_EQ(format_number(2.0), "2");
  EXPECT_EQ(number(std::numeric_limits<double>::infinity()), json(nullptr));
}

TEST(CompactLevels, DropsUnusedAndWidensBack) {
  auto ds = testutil::dataset_1based({4}, {{1}, {3}, {3}}, {1, 2, 3});
  auto small = compact_levels(ds);
  EXPECT_EQ(small.schema().predictor(0).levels, (std::vector<std::string>{"L1", "L3"}));
  EXPECT_EQ(small.code(1, 0), 1u);
  auto c = Coefficients::zeros(small.schema());
  c.categorical[0] = {5, 7};
  auto wide = align_coefficients(c, small.schema(), ds.schema());
  EXPECT_EQ(wide.categorical[0], (std::vector<double>{5, 0, 7, 0}));
}

TEST(LoadDatasets, SharedLevelsAcrossTables) {
  auto sf = simple_schema();
  auto parts = load_datasets({parse("x,color,y\n1,red,2\n2,red,3\n"), parse("color,y,x,extra\nblue,4,5,q\n")}, sf);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].schema().predictor(0).levels, (std::vector<std::string>{"blue", "red"}));
  EXPECT_EQ(parts[1].schema().predictor(0).levels, parts[0].schema().predictor(0).levels);
  EXPECT_EQ(parts[0].n(), 2u);
  EXPECT_EQ(parts[1].code(0, 0), 0u);
  EXPECT_EQ(parts[1].continuous()(0, 0), 5.0);
  EXPECT_EQ(parts[0].level_count(0, 0), 0u);
  EXPECT_THROW(load_datasets({parse("color,y\nred,1\n")}, sf), DataError);
}
