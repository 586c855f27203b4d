#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "granlab/data.hpp"
#include "granlab/error.hpp"
#include "granlab/image_io.hpp"

using namespace granlab;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> idx_fixture() {
  std::vector<std::uint8_t> b;
  for (auto part : {be32(0x803), be32(2), be32(3), be32(3)}) b.insert(b.end(), part.begin(), part.end());
  for (int i = 0; i < 18; ++i) b.push_back(static_cast<std::uint8_t>(i * 15));
  return b;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("granlab_data_test_" + name);
}

}  // namespace

TEST(Idx, HandBuiltFixture) {
  auto d = parse_idx_images<double>(idx_fixture());
  EXPECT_EQ(d.x.shape(), (Shape{2, 1, 3, 3}));
  EXPECT_TRUE(d.normalized);
  for (int i = 0; i < 18; ++i) EXPECT_EQ(d.x[i], (i * 15) / 255.0);
  EXPECT_EQ(d.x.at(1, 0, 2, 2), 1.0);
}

TEST(Idx, AllZeroPixels) {
  auto b = idx_fixture();
  std::fill(b.begin() + 16, b.end(), 0);
  const auto d = parse_idx_images<double>(b);
  for (double v : d.x.data()) EXPECT_EQ(v, 0.0);
}

TEST(Idx, ErrorsCarryOffsets) {
  auto offset_of = [](const std::vector<std::uint8_t>& b) -> std::size_t {
    try {
      parse_idx_images<float>(b);
    } catch (const ParseError& e) {
      return e.offset();
    }
    return 999;
  };
  auto b = idx_fixture();
  EXPECT_EQ(offset_of({b.begin(), b.begin() + 10}), 10u);  // truncated header
  auto bad = b;
  bad[3] = 0x01;
  EXPECT_EQ(offset_of(bad), 0u);
  EXPECT_EQ(offset_of({b.begin(), b.end() - 1}), b.size() - 1);  // short payload
  auto extra = b;
  extra.push_back(7);
  EXPECT_EQ(offset_of(extra), b.size());
  auto zero = b;
  std::fill(zero.begin() + 4, zero.begin() + 8, 0);
  EXPECT_EQ(offset_of(zero), 4u);
}

TEST(Idx, LabelsAndFile) {
  std::vector<std::uint8_t> b;
  for (auto part : {be32(0x801), be32(3)}) b.insert(b.end(), part.begin(), part.end());
  b.insert(b.end(), {7, 0, 9});
  EXPECT_EQ(parse_idx_labels(b), (std::vector<std::uint8_t>{7, 0, 9}));
  EXPECT_THROW(parse_idx_labels(idx_fixture()), ParseError);

  const auto path = temp_path("images.idx");
  {
    const auto bytes = idx_fixture();
    std::ofstream(path, std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  EXPECT_EQ(load_idx<double>(path.string()).x, parse_idx_images<double>(idx_fixture()).x);
  std::filesystem::remove(path);
  EXPECT_THROW(load_idx<double>(path.string()), Error);
}

TEST(Ring, SingleModeZeroSigmaCollapses) {
  auto r = gen_gaussian_ring<double>(1, 2.0, 0.0, 50, 3);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(r.data.x.at(i, 0), r.means[0][0]);
    EXPECT_EQ(r.data.x.at(i, 1), r.means[0][1]);
  }
}

TEST(Ring, MeansAtEqualAngles) {
  auto r = gen_gaussian_ring<double>(8, 2.0, 0.05, 2000, 4);
  ASSERT_EQ(r.means.size(), 8u);
  const double cx = (r.means[0][0] + r.means[4][0]) / 2, cy = (r.means[2][1] + r.means[6][1]) / 2;
  const double rad = std::hypot(r.means[0][0] - cx, r.means[0][1] - cy);
  for (std::size_t k = 0; k < 8; ++k) {
    const double a = std::numbers::pi / 4 * static_cast<double>(k);
    EXPECT_NEAR(r.means[k][0] - cx, rad * std::cos(a), 1e-12) << k;
    EXPECT_NEAR(r.means[k][1] - cy, rad * std::sin(a), 1e-12) << k;
  }
}

TEST(Ring, UnitSquareAndDeterministic) {
  auto a = gen_gaussian_ring<float>(8, 2.0, 0.1, 3000, 9);
  EXPECT_EQ(a.data.x, gen_gaussian_ring<float>(8, 2.0, 0.1, 3000, 9).data.x);
  EXPECT_NE(a.data.x, gen_gaussian_ring<float>(8, 2.0, 0.1, 3000, 10).data.x);
  float lo = 1, hi = 0;
  for (float v : a.data.x.data()) lo = std::min(lo, v), hi = std::max(hi, v);
  EXPECT_GE(lo, 0.0f);
  EXPECT_LE(hi, 1.0f);
  EXPECT_EQ(hi, 1.0f);  // the wider axis spans the square
  EXPECT_GT(a.sigma, 0.0);
}

TEST(Ring, ModeCountsWithinMultinomialBound) {
  const std::size_t n = 10000;
  auto r = gen_gaussian_ring<double>(8, 2.0, 0.05, n, 11);
  std::vector<std::size_t> counts(8);
  for (auto k : r.labels) ++counts[k];
  const double p = 1.0 / 8, sd = std::sqrt(n * p * (1 - p));
  for (auto c : counts) EXPECT_LT(std::abs(static_cast<double>(c) - n * p), 4 * sd);
}

TEST(Shapes, DeterministicBinaryAndLit) {
  auto a = gen_shapes<float>(8, 500, 2);
  EXPECT_EQ(a.data.x.shape(), (Shape{500, 1, 8, 8}));
  EXPECT_EQ(a.data.x, gen_shapes<float>(8, 500, 2).data.x);
  EXPECT_EQ(a.labels, gen_shapes<float>(8, 500, 2).labels);
  for (std::size_t n = 0; n < 500; ++n) {
    std::size_t lit = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      const float v = a.data.x[n * 64 + i];
      EXPECT_TRUE(v == 0.0f || v == 1.0f);
      lit += v == 1.0f;
    }
    EXPECT_GE(lit, 1u);
  }
  EXPECT_THROW(gen_shapes<float>(3, 5, 1), ContractError);
}

TEST(Shapes, ClassBalanceWithinMultinomialBound) {
  const std::size_t n = 6000;
  auto s = gen_shapes<float>(8, n, 5);
  std::vector<std::size_t> counts(kShapeKinds);
  for (auto k : s.labels) ++counts[static_cast<std::size_t>(k)];
  const double p = 1.0 / kShapeKinds, sd = std::sqrt(n * p * (1 - p));
  for (auto c : counts) EXPECT_LT(std::abs(static_cast<double>(c) - n * p), 4 * sd);
}

TEST(Shapes, CrossIsSymmetricPlus) {
  auto s = gen_shapes<double>(6, 300, 8);
  for (std::size_t n = 0; n < 300; ++n) {
    if (s.labels[n] != ShapeKind::cross) continue;
    std::size_t rows = 0, cols = 0, lit = 0;
    for (std::size_t r = 0; r < 6; ++r) {
      std::size_t in_row = 0;
      for (std::size_t c = 0; c < 6; ++c) in_row += s.data.x.at(n, 0, r, c) == 1.0;
      rows += in_row > 0;
      lit += in_row;
    }
    for (std::size_t c = 0; c < 6; ++c) {
      std::size_t in_col = 0;
      for (std::size_t r = 0; r < 6; ++r) in_col += s.data.x.at(n, 0, r, c) == 1.0;
      cols += in_col > 0;
    }
    EXPECT_EQ(rows, cols);
    EXPECT_EQ(lit, 2 * rows - 1);
  }
}

TEST(Normalize, IdempotentAndUnitRange) {
  Tensor<double> x({2, 3}, std::vector<double>{-3, 0.5, 7, 2, 2, -1.25});
  auto once = normalize_minmax(x);
  EXPECT_EQ(normalize_minmax(once), once);
  EXPECT_EQ(once[0], 0.0);
  EXPECT_EQ(once[2], 1.0);
  EXPECT_EQ(normalize_minmax(Tensor<double>({4}, 3.0)), Tensor<double>({4}));
}

TEST(Split, LastRowsBecomeTest) {
  Tensor<double> x({5, 2});
  for (std::size_t i = 0; i < 10; ++i) x[i] = static_cast<double>(i);
  auto [train, test] = split_dataset(Dataset<double>{x, Split::train, true}, 2);
  EXPECT_EQ(train.size(), 3u);
  EXPECT_EQ(test.split, Split::test);
  EXPECT_EQ(test.x.at(0, 0), 6.0);
  EXPECT_THROW(split_dataset(Dataset<double>{x}, 5), ContractError);
}

TEST(Batches, FullBatchIsPermutation) {
  Tensor<double> x({6, 1});
  for (std::size_t i = 0; i < 6; ++i) x[i] = static_cast<double>(i);
  BatchStream<double> s(x, 6, 1);
  auto b = s.next();
  std::multiset<double> seen(b.data().begin(), b.data().end());
  EXPECT_EQ(seen, (std::multiset<double>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(s.batches_per_epoch(), 1u);
}

TEST(Batches, SameSeedSameOrder) {
  auto x = gen_shapes<float>(4, 37, 1).data.x;
  BatchStream<float> a(x, 5, 3), b(x, 5, 3), c(x, 5, 4);
  bool differs = false;
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(a.next(), b.next());
    c.next();
    differs |= a.last_indices() != c.last_indices();
  }
  EXPECT_TRUE(differs);
}

TEST(Batches, EpochUnionIsDatasetMinusRemainder) {
  Tensor<double> x({23, 1});
  BatchStream<double> s(x, 5, 9);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::set<std::size_t> seen;
    for (std::size_t b = 0; b < s.batches_per_epoch(); ++b) {
      s.next();
      for (auto i : s.last_indices()) EXPECT_TRUE(seen.insert(i).second) << "duplicate " << i;
      EXPECT_EQ(s.epoch(), static_cast<std::size_t>(epoch));
    }
    EXPECT_EQ(seen.size(), 20u);
    for (auto i : seen) EXPECT_LT(i, 23u);
  }
  EXPECT_THROW(BatchStream<double>(x, 24, 0), ContractError);
  EXPECT_THROW(BatchStream<double>(x, 0, 0), ContractError);
}

TEST(Pnm, RoundsToNearestAndClamps) {
  Tensor<double> img({1, 1, 5}, std::vector<double>{0.0, 0.5, 1.0 / 255 * 0.49, 2.0, -1.0});
  auto b = encode_pnm(img);
  const std::string header = "P5\n5 1\n255\n";
  ASSERT_EQ(b.size(), header.size() + 5);
  EXPECT_EQ(std::string(b.begin(), b.begin() + header.size()), header);
  EXPECT_EQ(std::vector<std::uint8_t>(b.begin() + header.size(), b.end()),
            (std::vector<std::uint8_t>{0, 128, 0, 255, 0}));
}

TEST(Pnm, ColourIsInterleaved) {
  Tensor<float> img({3, 1, 2}, std::vector<float>{1, 0, 0, 1, 0, 0});
  auto b = encode_pnm(img);
  const std::string header = "P6\n2 1\n255\n";
  EXPECT_EQ(std::vector<std::uint8_t>(b.begin() + header.size(), b.end()),
            (std::vector<std::uint8_t>{255, 0, 0, 0, 255, 0}));
  EXPECT_EQ(decode_pnm_stack<float>(b), img.reshaped({1, 3, 1, 2}));
  EXPECT_THROW(encode_pnm(Tensor<float>({2, 2, 2})), DimensionError);
}

TEST(Pnm, StackRoundTripOnByteGrid) {
  Tensor<double> batch({3, 1, 4, 5});
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = static_cast<double>((i * 37) % 256) / 255.0;
  EXPECT_EQ(decode_pnm_stack<double>(encode_pnm_stack(batch)), batch);
}

TEST(Pnm, HeaderCommentsAndMaxval) {
  const std::string text = "P5 # comment\n2 # w\n1\n15\n";
  std::vector<std::uint8_t> b(text.begin(), text.end());
  b.insert(b.end(), {15, 5});
  auto x = decode_pnm_stack<double>(b);
  EXPECT_EQ(x.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(x[0], 1.0);
  EXPECT_EQ(x[1], 5.0 / 15.0);
}

TEST(Pnm, MalformedInputRejected) {
  auto good = encode_pnm(Tensor<float>({1, 2, 2}));
  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(decode_pnm_stack<float>(truncated), ParseError);
  EXPECT_THROW(decode_pnm_stack<float>({'P', '4', '\n'}), ParseError);
  EXPECT_THROW(decode_pnm_stack<float>({}), ParseError);
  auto mixed = good;
  auto other = encode_pnm(Tensor<float>({1, 3, 2}));
  mixed.insert(mixed.end(), other.begin(), other.end());
  try {
    decode_pnm_stack<float>(mixed);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), good.size());
  }
}

TEST(Pnm, DirectoryReadInNameOrder) {
  const auto dir = temp_path("dir");
  std::filesystem::create_directories(dir);
  Tensor<float> a({1, 2, 2}, 1.0f), b({1, 2, 2}, 0.0f);
  write_pnm((dir / "b.pgm").string(), b);
  write_pnm((dir / "a.pgm").string(), a);
  std::ofstream(dir / "notes.txt") << "ignored";
  auto x = read_pnm_stack<float>(dir.string());
  EXPECT_EQ(x.shape(), (Shape{2, 1, 2, 2}));
  EXPECT_EQ(x[0], 1.0f);
  EXPECT_EQ(x[4], 0.0f);
  std::filesystem::remove_all(dir);
}

TEST(Grid, TilesWithPadding) {
  Tensor<double> batch({3, 1, 2, 2});
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = static_cast<double>(i + 1);
  auto g = tile_grid(batch, 2, 1, -1.0);
  EXPECT_EQ(g.shape(), (Shape{1, 5, 5}));
  EXPECT_EQ(g.at(0, 0, 0), 1.0);
  EXPECT_EQ(g.at(0, 0, 2), -1.0);
  EXPECT_EQ(g.at(0, 0, 3), 5.0);
  EXPECT_EQ(g.at(0, 4, 1), 12.0);
  EXPECT_EQ(g.at(0, 4, 4), -1.0);
  EXPECT_EQ(tile_grid(batch).shape(), (Shape{1, 5, 5}));
}
