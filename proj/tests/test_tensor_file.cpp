#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>

#include "test_util.hpp"

using namespace mgptq;

namespace {

TensorFile random_file(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TensorFile f;
  const std::size_t sections = rng() % 6;
  for (std::size_t s = 0; s < sections; ++s) {
    std::vector<std::uint64_t> dims(rng() % 4);
    for (auto& d : dims) d = rng() % 5;
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    const std::string name = "s" + std::to_string(s) + std::string(rng() % 8, 'x');
    switch (rng() % 3) {
      case 0: {
        std::vector<float> v(n);
        for (auto& x : v) x = static_cast<float>(std::normal_distribution<double>()(rng));
        f.add(Tensor::from_values<float>(name, dims, v));
        break;
      }
      case 1: {
        std::vector<double> v(n);
        for (auto& x : v) x = std::normal_distribution<double>(0, 1e3)(rng);
        f.add(Tensor::from_values<double>(name, dims, v));
        break;
      }
      default: {
        std::vector<std::uint8_t> v(n);
        for (auto& x : v) x = static_cast<std::uint8_t>(rng());
        f.add(Tensor::from_values<std::uint8_t>(name, dims, v));
      }
    }
  }
  return f;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mgptq_tf_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(TensorFileFormat, ScalarByteLayout) {
  TensorFile f;
  f.add(Tensor::scalar("a", 1.0));
  const std::vector<std::uint8_t> expected{'M', 'G', 'Q', 'T', 1, 1, 0, 1, 'a', 1, 0,
                                           0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
  EXPECT_EQ(f.serialize(), expected);
}

TEST(TensorFileFormat, MatrixDimsLittleEndian) {
  TensorFile f;
  f.add(Tensor::from_matrix("m", Matrix<float>(2, 3)));
  const auto b = f.serialize();
  ASSERT_EQ(b.size(), 4u + 1 + 2 + 1 + 1 + 1 + 1 + 16 + 24);
  EXPECT_EQ(b[9], 0);   // f32
  EXPECT_EQ(b[10], 2);  // ndim
  EXPECT_EQ(b[11], 2);
  EXPECT_EQ(b[19], 3);
}

TEST(TensorFileFormat, EmptyFile) {
  const TensorFile f;
  const auto b = f.serialize();
  EXPECT_EQ(b.size(), 7u);
  EXPECT_TRUE(TensorFile::parse(b).sections().empty());
}

TEST(TensorFileFormat, RoundTripSeeded) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto f = random_file(seed);
    const auto bytes = f.serialize();
    const auto g = TensorFile::parse(bytes);
    ASSERT_EQ(g.sections(), f.sections()) << "seed " << seed;
    EXPECT_EQ(g.serialize(), bytes);
  }
}

TEST(TensorFileFormat, MatrixValuesSurvive) {
  const auto m = testutil::random_matrix(7, 5, 3);
  TensorFile f;
  f.add(Tensor::from_matrix("w", m));
  f.add(Tensor::from_matrix("w32", Matrix<float>::cast(m)));
  const auto g = TensorFile::parse(f.serialize());
  EXPECT_EQ(g.get("w").to_matrix<double>(), m);
  EXPECT_EQ(g.get("w32").to_matrix<float>(), Matrix<float>::cast(m));
}

TEST(TensorFileFormat, DiskRoundTripAndMissingFile) {
  const auto path = temp_path("disk.mgqt");
  const auto f = random_file(17);
  f.write(path);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  EXPECT_EQ(TensorFile::read(path).sections(), f.sections());
  std::filesystem::remove(path);
  EXPECT_THROW(TensorFile::read(path), ValidationError);
}

TEST(TensorFileMalformed, BadMagicAndVersion) {
  TensorFile f;
  f.add(Tensor::scalar("a", 2.0));
  auto b = f.serialize();
  auto bad = b;
  bad[0] = 'X';
  EXPECT_THROW(TensorFile::parse(bad), FormatError);
  bad = b;
  bad[4] = 2;
  EXPECT_THROW(TensorFile::parse(bad), FormatError);
}

TEST(TensorFileMalformed, EveryTruncationIsRejected) {
  const auto b = random_file(5).serialize();
  ASSERT_GT(b.size(), 7u);
  for (std::size_t n = 0; n < b.size(); ++n)
    EXPECT_THROW(TensorFile::parse(std::span<const std::uint8_t>(b.data(), n)), FormatError) << n;
}

TEST(TensorFileMalformed, TrailingBytes) {
  auto b = random_file(6).serialize();
  b.push_back(0);
  EXPECT_THROW(TensorFile::parse(b), FormatError);
}

TEST(TensorFileMalformed, UnknownDtype) {
  TensorFile f;
  f.add(Tensor::scalar("a", 2.0));
  auto b = f.serialize();
  b[9] = 7;
  EXPECT_THROW(TensorFile::parse(b), FormatError);
}

TEST(TensorFileMalformed, DuplicateSection) {
  TensorFile f;
  f.add(Tensor::scalar("a", 1.0));
  f.add(Tensor::scalar("b", 2.0));
  auto b = f.serialize();
  b[8 + 11] = 'a';  // rename the second section
  EXPECT_THROW(TensorFile::parse(b), FormatError);
  EXPECT_THROW(f.add(Tensor::scalar("a", 3.0)), ValidationError);
}

TEST(TensorFileMalformed, HugeDimsDoNotAllocate) {
  std::vector<std::uint8_t> b{'M', 'G', 'Q', 'T', 1, 1, 0, 1, 'a', 1, 2};
  for (int d = 0; d < 2; ++d)
    for (int i = 0; i < 8; ++i) b.push_back(0xFF);
  EXPECT_THROW(TensorFile::parse(b), FormatError);
  b.resize(11);
  for (int i = 0; i < 8; ++i) b.push_back(i == 4 ? 1 : 0);  // 2^32 elements
  for (int i = 0; i < 8; ++i) b.push_back(i == 0 ? 1 : 0);
  EXPECT_THROW(TensorFile::parse(b), FormatError);
}

TEST(TensorFileMalformed, NonFiniteValuesRejectedOnLoad) {
  const std::vector<double> v{1.0, std::nan("")};
  TensorFile f;
  f.add(Tensor::from_vector("v", v));
  const auto g = TensorFile::parse(f.serialize());
  EXPECT_THROW(g.get("v").to_doubles(), FormatError);
}

TEST(TensorFileAccess, MissingSectionAndWrongKind) {
  TensorFile f;
  f.add(Tensor::from_vector("v", std::vector<double>{1, 2}));
  EXPECT_THROW(f.get("w"), FormatError);
  EXPECT_THROW(f.get("v").to_matrix<double>(), FormatError);
  EXPECT_THROW(f.get("v").to_scalar(), FormatError);
  EXPECT_THROW(Tensor::from_values<double>("x", {3}, std::vector<double>{1.0}), DimensionError);
}
