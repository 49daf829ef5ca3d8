#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "vda/data/container.hpp"
#include "vda/data/phantom.hpp"
#include "vda/data/split.hpp"

using namespace vda;

namespace {

double mean_where(const Tensor<float>& img, const Tensor<uint8_t>& mask, bool value) {
  double sum = 0;
  int64_t n = 0;
  for (int64_t i = 0; i < img.numel(); ++i)
    if ((mask[i] != 0) == value) {
      sum += img[i];
      ++n;
    }
  return n ? sum / double(n) : 0.0;
}

double mean_vessel_vs_tissue_gap(const LabeledSample& s) {
  Tensor<uint8_t> tissue({s.brain.shape()[0], s.brain.shape()[1]});
  for (int64_t i = 0; i < tissue.numel(); ++i) tissue[i] = s.brain[i] && !s.vessel[i];
  return mean_where(s.image, s.vessel, true) - mean_where(s.image, tissue, true);
}

}  // namespace

TEST(Phantom, DeterministicAcrossCalls) {
  PhantomSpec spec = PhantomSpec::target_default();
  LabeledSample a = generate_sample(spec, 1234);
  LabeledSample b = generate_sample(spec, 1234);
  EXPECT_TRUE(bit_equal(a.image, b.image));
  EXPECT_TRUE(bit_equal(a.brain, b.brain));
  EXPECT_TRUE(bit_equal(a.vessel, b.vessel));

  LabeledSample c = generate_sample(spec, 1235);
  EXPECT_FALSE(bit_equal(a.image, c.image));
}

TEST(Phantom, NoVesselsGivesEmptyMask) {
  PhantomSpec spec = PhantomSpec::source_default();
  spec.n_vessels_min = spec.n_vessels_max = 0;
  LabeledSample s = generate_sample(spec, 7);
  int64_t vessel_px = 0, brain_px = 0;
  for (int64_t i = 0; i < s.vessel.numel(); ++i) {
    vessel_px += s.vessel[i];
    brain_px += s.brain[i];
  }
  EXPECT_EQ(vessel_px, 0);
  EXPECT_GT(brain_px, s.brain.numel() / 4);
}

TEST(Phantom, RejectsBadConfig) {
  PhantomSpec spec = PhantomSpec::source_default();
  spec.radius_min_px = 3.0;
  spec.radius_max_px = 2.0;
  EXPECT_THROW(generate_sample(spec, 1), ConfigError);
  spec = PhantomSpec::source_default(16);
  EXPECT_THROW(generate_sample(spec, 1), ConfigError);
}

TEST(Phantom, VesselsInsideBrain) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    for (auto spec : {PhantomSpec::source_default(), PhantomSpec::target_default()}) {
      LabeledSample s = generate_sample(spec, seed);
      for (int64_t i = 0; i < s.vessel.numel(); ++i)
        if (s.vessel[i]) ASSERT_TRUE(s.brain[i]) << "seed " << seed;
    }
  }
}

TEST(Phantom, PolarityHoldsAlmostAlways) {
  int src_ok = 0, tgt_ok = 0;
  const int n = 50;
  for (uint64_t seed = 0; seed < n; ++seed) {
    LabeledSample s = generate_sample(PhantomSpec::source_default(), seed);
    LabeledSample t = generate_sample(PhantomSpec::target_default(), seed);
    if (mean_vessel_vs_tissue_gap(s) > 0) ++src_ok;
    if (mean_vessel_vs_tissue_gap(t) < 0) ++tgt_ok;
  }
  EXPECT_GE(src_ok, int(0.95 * n));
  EXPECT_GE(tgt_ok, int(0.95 * n));
}

// A one-feature threshold classifier (mean intensity inside the vessel mask)
// must separate the two domains almost perfectly.
TEST(Phantom, DomainsSeparable) {
  const int n = 50;
  std::vector<double> src, tgt;
  for (uint64_t seed = 0; seed < n; ++seed) {
    LabeledSample s = generate_sample(PhantomSpec::source_default(), 1000 + seed);
    LabeledSample t = generate_sample(PhantomSpec::target_default(), 2000 + seed);
    src.push_back(mean_where(s.image, s.vessel, true));
    tgt.push_back(mean_where(t.image, t.vessel, true));
  }
  double ms = 0, mt = 0;
  for (double v : src) ms += v / n;
  for (double v : tgt) mt += v / n;
  double threshold = (ms + mt) / 2;
  int correct = 0;
  for (double v : src) correct += v > threshold;
  for (double v : tgt) correct += v < threshold;
  EXPECT_GE(correct, int(0.95 * 2 * n));
}

TEST(Split, DefaultCountsAndDisjointIds) {
  SplitCounts counts;
  counts.source_labeled = 6;
  counts.target_unlabeled = 4;
  counts.target_labeled = 2;
  counts.val = 2;
  counts.test_source = 2;
  counts.test_target = 2;
  DatasetSplit split = make_split(PhantomSpec::source_default(), PhantomSpec::target_default(),
                                  counts, 99);
  EXPECT_EQ(split.source_labeled.size(), 6u);
  EXPECT_EQ(split.target_unlabeled.size(), 4u);
  EXPECT_EQ(split.target_labeled.size(), 2u);
  EXPECT_EQ(split.val.size(), 2u);
  EXPECT_EQ(split.test_source.size(), 2u);
  EXPECT_EQ(split.test_target.size(), 2u);

  std::set<std::string> ids;
  size_t total = 0;
  for (const auto* cohort : {&split.source_labeled, &split.target_unlabeled, &split.target_labeled,
                             &split.val, &split.test_source, &split.test_target})
    for (const auto& s : *cohort) {
      ids.insert(s.id);
      ++total;
    }
  EXPECT_EQ(ids.size(), total);

  EXPECT_EQ(split.source_labeled[0].id, "src-000");
  EXPECT_EQ(split.val[0].domain, Domain::target);
}

TEST(Split, ZeroTargetLabeledAllowed) {
  SplitCounts counts;
  counts.source_labeled = 1;
  counts.target_unlabeled = 1;
  counts.target_labeled = 0;
  counts.val = 1;
  counts.test_source = 1;
  counts.test_target = 1;
  DatasetSplit split = make_split(PhantomSpec::source_default(), PhantomSpec::target_default(),
                                  counts, 5);
  EXPECT_TRUE(split.target_labeled.empty());
}

TEST(Split, DeterministicAndOrderValidated) {
  SplitCounts counts;
  counts.source_labeled = 2;
  counts.target_unlabeled = 1;
  counts.target_labeled = 1;
  counts.val = 1;
  counts.test_source = 1;
  counts.test_target = 1;
  auto s1 = make_split(PhantomSpec::source_default(), PhantomSpec::target_default(), counts, 42);
  auto s2 = make_split(PhantomSpec::source_default(), PhantomSpec::target_default(), counts, 42);
  EXPECT_TRUE(bit_equal(s1.source_labeled[1].image, s2.source_labeled[1].image));
  EXPECT_TRUE(bit_equal(s1.test_target[0].image, s2.test_target[0].image));
  EXPECT_EQ(s1.val[0].id, s2.val[0].id);

  EXPECT_THROW(make_split(PhantomSpec::target_default(), PhantomSpec::source_default(), counts, 1),
               ConfigError);
  PhantomSpec thin_source = PhantomSpec::source_default();
  thin_source.radius_min_px = 0.8;
  EXPECT_THROW(make_split(thin_source, PhantomSpec::target_default(), counts, 1), ConfigError);
}

TEST(Container, RoundTripIsBitExact) {
  auto dir = std::filesystem::temp_directory_path() / "vda_container_test";
  std::filesystem::remove_all(dir);

  LabeledSample s = generate_sample(PhantomSpec::target_default(), 77);
  s.id = "tgt-007";
  save_sample(dir, s);
  LabeledSample r = load_sample(dir, "tgt-007");
  EXPECT_EQ(r.id, s.id);
  EXPECT_EQ(r.domain, Domain::target);
  EXPECT_EQ(r.seed, 77u);
  EXPECT_TRUE(bit_equal(r.image, s.image));
  EXPECT_TRUE(bit_equal(r.brain, s.brain));
  EXPECT_TRUE(bit_equal(r.vessel, s.vessel));

  LabeledSample u = generate_sample(PhantomSpec::target_default(), 78);
  u.id = "tgt-008";
  save_sample(dir, u, /*with_vessel_mask=*/false);
  LabeledSample ru = load_sample(dir, "tgt-008");
  EXPECT_FALSE(ru.vessel.defined());

  auto ids = list_ids(dir);
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_EQ(ids[0], "tgt-007");
  EXPECT_EQ(ids[1], "tgt-008");

  std::filesystem::remove_all(dir);
}

TEST(Container, MissingFilesReported) {
  auto dir = std::filesystem::temp_directory_path() / "vda_container_missing";
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_sample(dir, "nope"), IoError);

  LabeledSample s = generate_sample(PhantomSpec::source_default(), 1);
  s.id = "src-001";
  save_sample(dir, s);
  std::filesystem::remove(dir / "src-001.img.f32");
  EXPECT_THROW(load_sample(dir, "src-001"), IoError);
  std::filesystem::remove_all(dir);
}
