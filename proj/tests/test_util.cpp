#include <gtest/gtest.h>

#include "distil/csv.hpp"
#include "distil/util.hpp"
#include "fixtures.hpp"

using namespace distil;

TEST(Util, Sha256KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Util, TrimAndLower) {
    EXPECT_EQ(trim("  a b \n"), "a b");
    EXPECT_EQ(trim("   "), "");
    EXPECT_EQ(to_lower("HeLLo"), "hello");
}

TEST(Util, ParseLabelTokens) {
    EXPECT_EQ(parse_label("1"), Label::hate);
    EXPECT_EQ(parse_label(" HATE "), Label::hate);
    EXPECT_EQ(parse_label("True"), Label::hate);
    EXPECT_EQ(parse_label("0"), Label::non_hate);
    EXPECT_EQ(parse_label("non_hate"), Label::non_hate);
    EXPECT_FALSE(parse_label("maybe").has_value());
}

TEST(Util, RngIsReproducibleAndUnbiasedEnough) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.below(1000), b.below(1000));
    Rng c(7);
    std::vector<int> hist(4);
    for (int i = 0; i < 40000; ++i) ++hist[c.below(4)];
    for (int h : hist) EXPECT_NEAR(h, 10000, 400);
}

TEST(Util, ShuffleIsPermutation) {
    Rng r(3);
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    r.shuffle(std::span<int>(v));
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_NE(v, sorted);
}

TEST(Util, JsonlRoundTrip) {
    const auto dir = fixtures::temp_dir("jsonl");
    std::vector<Json> rows{Json{{"a", 1}}, Json{{"b", "x\ny"}}};
    write_jsonl(dir / "sub" / "f.jsonl", rows);
    EXPECT_EQ(read_jsonl(dir / "sub" / "f.jsonl"), rows);
    EXPECT_THROW(read_file(dir / "missing"), IoError);
}

TEST(Csv, QuotedFieldsAndEmbeddedNewlines) {
    const auto rows = parse_delimited("a,b,c\n\"x, y\",\"he said \"\"hi\"\"\",\"line1\nline2\"\n", ',');
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1][0], "x, y");
    EXPECT_EQ(rows[1][1], "he said \"hi\"");
    EXPECT_EQ(rows[1][2], "line1\nline2");
}

TEST(Csv, CrlfAndDelimiterSniffing) {
    const auto rows = parse_delimited("a\tb\r\n1\t2\r\n", '\t');
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1][1], "2");
    EXPECT_EQ(sniff_delimiter("text\tlabel\tsource\n"), '\t');
    EXPECT_EQ(sniff_delimiter("text,label,source\n"), ',');
}
