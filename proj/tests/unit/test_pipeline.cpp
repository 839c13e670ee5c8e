#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include <gtest/gtest.h>

#include "cdnet/cdt_io.hpp"
#include "cdnet/dataset.hpp"
#include "cdnet/pipeline.hpp"
#include "oracles.hpp"

using namespace cdnet;
using namespace cdnet::testing;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cdnet_pipeline_" + std::to_string(::getpid()) + "_" + name);
  fs::create_directories(p);
  return p;
}


std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

// ---- preprocessing ---------------------------------------------------------------------------

TEST(Preprocess, WindowEndpoints) {
  const std::vector<double> raw{-2000, -1000, 170, 3000, -415};
  const auto r = preprocess_slice<double>(raw, 1, 5, 1, 5);
  EXPECT_EQ(r.preprocessed[0], 0.0);
  EXPECT_EQ(r.preprocessed[1], 0.0);
  EXPECT_EQ(r.preprocessed[2], 1.0);
  EXPECT_EQ(r.preprocessed[3], 1.0);
  EXPECT_NEAR(r.preprocessed[4], 0.5, 1e-15);
  EXPECT_EQ(r.raw, raw);
  EXPECT_EQ(r.source_h, 1u);
  EXPECT_EQ(r.source_w, 5u);
}

TEST(Preprocess, ConstantSliceStaysConstantAtTargetSize) {
  for (auto [h, w] : {std::pair{7, 13}, std::pair{64, 64}, std::pair{100, 37}}) {
    const std::vector<double> raw(static_cast<std::size_t>(h * w), -300.0);
    const auto r = preprocess_slice<float>(raw, h, w, 32, 48);
    EXPECT_EQ(r.preprocessed.shape(), (Shape{1, 1, 32, 48}));
    for (float v : r.preprocessed.vec()) EXPECT_NEAR(v, 700.0 / 1170.0, 1e-6);
  }
}

TEST(Preprocess, SameSizeInWindowIsExactFormula) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> hu(-1000, 170);
  std::vector<double> raw(24 * 18);
  for (auto& v : raw) v = hu(rng);
  const auto r = preprocess_slice<double>(raw, 24, 18, 24, 18);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_DOUBLE_EQ(r.preprocessed[i], (raw[i] + 1000.0) / 1170.0);
}

TEST(Preprocess, OutputAlwaysInUnitInterval) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> hu(-3000, 3000);
  std::vector<double> raw(40 * 30);
  for (auto& v : raw) v = hu(rng);
  const auto r = preprocess_slice<double>(raw, 40, 30, 64, 64);
  for (double v : r.preprocessed.vec()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Preprocess, CustomWindowAndErrors) {
  const std::vector<double> raw{-100, 0, 100};
  const auto r = preprocess_slice<double>(raw, 1, 3, 1, 3, HuWindow{-100, 100});
  EXPECT_EQ(r.preprocessed[1], 0.5);
  EXPECT_THROW(preprocess_slice<double>({}, 0, 0, 4, 4), ShapeError);
  EXPECT_THROW(preprocess_slice<double>(raw, 2, 2, 4, 4), ShapeError);
  const std::vector<double> bad{0, std::nan(""), 0};
  EXPECT_THROW(preprocess_slice<double>(bad, 1, 3, 1, 3), NumericError);
}

// ---- severity grading ------------------------------------------------------------------------

TEST(Severity, FivePatientOutcomes) {
  struct Case {
    double left, right;
    SeverityGrade grade;
  };
  const std::vector<Case> cases{{81.92, 69.00, SeverityGrade::kCT4},
                                {7.75, 2.27, SeverityGrade::kCT1},
                                {31.00, 23.06, SeverityGrade::kCT2},
                                {38.36, 6.40, SeverityGrade::kCT2},
                                {0.0, 0.0, SeverityGrade::kCT0}};
  for (const auto& c : cases) {
    const auto p = patient(pixels_for(c.right), pixels_for(c.left));
    const auto r = grade_severity(p.lesion, p.lungs);
    EXPECT_NEAR(r.left_pct, c.left, 1e-9);
    EXPECT_NEAR(r.right_pct, c.right, 1e-9);
    EXPECT_EQ(r.grade, c.grade) << c.left << "/" << c.right;
  }
}

TEST(Severity, GradeBoundaries) {
  const std::vector<std::pair<double, SeverityGrade>> cases{
      {0.0, SeverityGrade::kCT0},     {1e-9, SeverityGrade::kCT1},    {24.999, SeverityGrade::kCT1},
      {25.0, SeverityGrade::kCT2},    {49.999, SeverityGrade::kCT2},  {50.0, SeverityGrade::kCT3},
      {74.999, SeverityGrade::kCT3},  {75.0, SeverityGrade::kCT4},    {100.0, SeverityGrade::kCT4}};
  for (const auto& [pct, g] : cases) EXPECT_EQ(grade_from_percentage(pct), g) << pct;
  EXPECT_THROW(grade_from_percentage(-0.1), ConfigError);
  EXPECT_THROW(grade_from_percentage(100.1), ConfigError);
  EXPECT_STREQ(grade_name(SeverityGrade::kCT0), "CT-0");
  EXPECT_STREQ(grade_name(SeverityGrade::kCT4), "CT-4");
}

TEST(Severity, InvariantToSliceOrderAndBackgroundPermutation) {
  std::mt19937_64 rng(3);
  auto p = patient(pixels_for(40.0), pixels_for(12.5));
  const auto base = grade_severity(p.lesion, p.lungs);
  // Swap the two slices.
  auto swapped = p;
  const std::size_t plane = 100 * 120;
  std::swap_ranges(swapped.lesion.labels.begin(), swapped.lesion.labels.begin() + plane,
                   swapped.lesion.labels.begin() + plane);
  std::swap_ranges(swapped.lungs.labels.begin(), swapped.lungs.labels.begin() + plane,
                   swapped.lungs.labels.begin() + plane);
  const auto r1 = grade_severity(swapped.lesion, swapped.lungs);
  EXPECT_EQ(r1.left_pct, base.left_pct);
  EXPECT_EQ(r1.right_pct, base.right_pct);
  // Shuffle lesion values among background pixels.
  std::vector<std::size_t> background;
  for (std::size_t i = 0; i < p.lungs.size(); ++i) {
    if (p.lungs.labels[i] == 0) background.push_back(i);
  }
  std::vector<std::uint8_t> vals;
  for (auto i : background) vals.push_back(p.lesion.labels[i]);
  std::shuffle(vals.begin(), vals.end(), rng);
  for (std::size_t k = 0; k < background.size(); ++k) p.lesion.labels[background[k]] = vals[k];
  const auto r2 = grade_severity(p.lesion, p.lungs);
  EXPECT_EQ(r2.left_pct, base.left_pct);
  EXPECT_EQ(r2.right_pct, base.right_pct);
  EXPECT_EQ(r2.grade, base.grade);
}

TEST(Severity, ErrorsOnEmptyLungOrShapeMismatch) {
  LabelVolume lungs{1, 2, 2, {1, 1, 0, 0}};  // no left lung
  LabelVolume lesion{1, 2, 2, {1, 0, 0, 0}};
  EXPECT_THROW(grade_severity(lesion, lungs), UndefinedError);
  LabelVolume small{1, 1, 2, {1, 0}};
  EXPECT_THROW(grade_severity(small, LabelVolume{1, 2, 2, {1, 2, 0, 0}}), ShapeError);
}

// ---- mask files ------------------------------------------------------------------------------

TEST(MaskIo, CdtRoundTripIsBitExact) {
  const fs::path dir = temp_dir("cdt");
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> bit(0, 1), lung(0, 2);
  LabelVolume b{3, 9, 7, std::vector<std::uint8_t>(3 * 9 * 7)};
  for (auto& v : b.labels) v = static_cast<std::uint8_t>(bit(rng));
  write_mask(dir / "b.cdt", b, MaskKind::kBinary);
  EXPECT_EQ(read_mask(dir / "b.cdt", MaskKind::kBinary), b);
  LabelVolume l{2, 5, 6, std::vector<std::uint8_t>(60)};
  for (auto& v : l.labels) v = static_cast<std::uint8_t>(lung(rng));
  write_mask(dir / "l.cdt", l, MaskKind::kLung);
  EXPECT_EQ(read_mask(dir / "l.cdt", MaskKind::kLung), l);
  fs::remove_all(dir);
}

TEST(MaskIo, PgmBinarizesMaxval) {
  const fs::path dir = temp_dir("pgm");
  {
    std::ofstream out(dir / "m.pgm", std::ios::binary);
    out << "P5\n# comment\n3 2\n255\n";
    const unsigned char px[6] = {0, 255, 255, 0, 0, 255};
    out.write(reinterpret_cast<const char*>(px), 6);
  }
  const auto m = read_mask(dir / "m.pgm", MaskKind::kBinary);
  EXPECT_EQ(m, (LabelVolume{1, 2, 3, {0, 1, 1, 0, 0, 1}}));
  write_mask(dir / "w.pgm", m, MaskKind::kBinary);
  EXPECT_EQ(read_mask(dir / "w.pgm", MaskKind::kBinary), m);
  const std::string bytes = slurp(dir / "w.pgm");
  EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 255);
  fs::remove_all(dir);
}

TEST(MaskIo, OutOfAlphabetLabelNamesPixel) {
  const fs::path dir = temp_dir("alpha");
  save_cdt(dir / "bad.cdt", NdArray::from_u8({2, 3}, {0, 1, 2, 3, 1, 0}));
  try {
    read_mask(dir / "bad.cdt", MaskKind::kLung);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("pixel 3"), std::string::npos) << msg;
  }
  EXPECT_THROW(read_mask(dir / "bad.cdt", MaskKind::kBinary), IoError);
  fs::remove_all(dir);
}

TEST(MaskIo, RejectsFloatContainersAndBadPgm) {
  const fs::path dir = temp_dir("badfmt");
  save_cdt(dir / "f.cdt", NdArray::from_f32({2, 2}, {0, 1, 0, 1}));
  EXPECT_THROW(read_mask(dir / "f.cdt", MaskKind::kBinary), IoError);
  {
    std::ofstream out(dir / "p2.pgm", std::ios::binary);
    out << "P2\n2 1\n255\n0 255\n";
  }
  EXPECT_THROW(read_mask(dir / "p2.pgm", MaskKind::kBinary), IoError);
  EXPECT_THROW(read_mask(dir / "missing.cdt", MaskKind::kBinary), IoError);
  fs::remove_all(dir);
}

// ---- CDT container ---------------------------------------------------------------------------

TEST(CdtContainer, RoundTripsEveryDtype) {
  std::stringstream ss;
  const auto a = NdArray::from_f64({2, 3}, {1.5, -2, 3e-300, 4, 5, 6});
  const auto b = NdArray::from_f32({1, 1, 2, 2}, {0.25f, 1, 2, 3});
  const auto c = NdArray::from_u8({4}, {0, 1, 2, 255});
  for (const auto* x : {&a, &b, &c}) {
    std::stringstream s;
    write_cdt(s, *x);
    EXPECT_EQ(read_cdt(s), *x);
  }
  EXPECT_EQ(a.to_f64()[2], 3e-300);
}

TEST(CdtContainer, ErrorsNameByteOffset) {
  auto expect_offset = [](const std::string& bytes, const std::string& needle) {
    std::stringstream s(bytes);
    try {
      read_cdt(s);
      FAIL() << "expected IoError";
    } catch (const IoError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_offset("XDT1", "offset 0");
  expect_offset(std::string("CDT1\x07\x01\x02\x00\x00\x00", 10), "offset 4");
  std::stringstream good;
  write_cdt(good, NdArray::from_f32({4}, {1, 2, 3, 4}));
  const std::string full = good.str();
  expect_offset(full.substr(0, full.size() - 3), "offset");
}

TEST(CdtContainer, TensorConversionAcceptsTwoThreeAndFourDims) {
  const auto t2 = tensor_from_cdt<double>(NdArray::from_f64({2, 3}, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(t2.shape(), (Shape{1, 1, 2, 3}));
  const auto t3 = tensor_from_cdt<float>(NdArray::from_u8({2, 1, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(t3.shape(), (Shape{1, 2, 1, 2}));
  EXPECT_EQ(t3[3], 4.0f);
  Tensor<double> t4(Shape{2, 1, 2, 2}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_EQ(tensor_from_cdt<double>(tensor_to_cdt(t4)).vec(), t4.vec());
  EXPECT_THROW(tensor_from_cdt<double>(NdArray::from_f64({8}, std::vector<double>(8))), ShapeError);
}

// ---- datasets --------------------------------------------------------------------------------

TEST(BlobDataset, DeterministicBinaryMasksAndBoundedImages) {
  BlobOptions o;
  o.count = 8;
  o.size = 64;
  o.seed = 5;
  const auto a = make_blob_dataset<float>(o);
  const auto b = make_blob_dataset<float>(o);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].image.vec(), b[k].image.vec());
    EXPECT_EQ(a[k].image.shape(), (Shape{1, 1, 64, 64}));
    double fg = 0.0;
    for (float v : a[k].mask.vec()) {
      EXPECT_TRUE(v == 0.0f || v == 1.0f);
      fg += v;
    }
    EXPECT_GT(fg, 0.0);
    EXPECT_LT(fg, 64.0 * 64.0 * 0.8);
    for (float v : a[k].image.vec()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  o.seed = 6;
  EXPECT_NE(make_blob_dataset<float>(o)[0].mask.vec(), a[0].mask.vec());
  o.count = 0;
  EXPECT_THROW(make_blob_dataset<float>(o), ConfigError);
}

TEST(DatasetDir, SaveLoadRoundTrip) {
  const fs::path dir = temp_dir("dataset");
  BlobOptions o;
  o.count = 3;
  o.size = 16;
  std::vector<NamedSample<double>> named;
  const auto blobs = make_blob_dataset<double>(o);
  for (std::size_t k = 0; k < blobs.size(); ++k) named.push_back({"slice" + std::to_string(k), blobs[k]});
  save_dataset(dir, named);
  const auto back = load_dataset<double>(dir);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(back[k].stem, named[k].stem);
    EXPECT_EQ(back[k].sample.image.vec(), named[k].sample.image.vec());
    EXPECT_EQ(back[k].sample.mask.vec(), named[k].sample.mask.vec());
  }
  fs::remove(dir / "masks" / "slice1.cdt");
  try {
    load_dataset<double>(dir);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("slice1"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
  EXPECT_THROW(load_dataset<double>(dir), IoError);
}
