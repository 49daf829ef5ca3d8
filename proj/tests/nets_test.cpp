#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "support/gradcheck.hpp"
#include "support/netcheck.hpp"
#include "vda/nn/checkpoint.hpp"
#include "vda/nn/discriminator.hpp"
#include "vda/nn/encoder.hpp"
#include "vda/nn/generator.hpp"
#include "vda/nn/losses.hpp"
#include "vda/opt/adam.hpp"

using namespace vda;
using vda::testing::check_grad;
using vda::testing::perturbation_gradcheck;

namespace {

GenConfig tiny_config() {
  GenConfig cfg;
  cfg.image_size = 16;
  cfg.z_dim = 8;
  cfg.d_w = 8;
  cfg.map_layers = 2;
  cfg.widths = {{4, 12}, {8, 8}, {16, 6}};
  return cfg;
}

template <typename T>
bool grads_absent(const ParamStore<T>& ps) {
  for (const auto& [name, v] : ps.items())
    if (v.grad_steps() != 0 || v.grad().defined()) return false;
  return true;
}

template <typename T>
bool grads_present_and_finite(const ParamStore<T>& ps) {
  for (const auto& [name, v] : ps.items()) {
    if (v.grad_steps() == 0 || !v.grad().defined()) return false;
    if (!v.grad().all_finite()) return false;
  }
  return true;
}

}  // namespace

TEST(Mapping, DeterministicShapedAndInputSensitive) {
  Generator<float> g(tiny_config(), 11);
  Rng rng(5);
  Tensor<float> z = Tensor<float>::randn({3, 8}, rng);
  Var<float> w1 = g.map_latent(Var<float>(z));
  Var<float> w2 = g.map_latent(Var<float>(z.clone()));
  ASSERT_EQ(w1.shape(), (Shape{3, 8}));
  EXPECT_TRUE(bit_equal(w1.val(), w2.val()));

  Tensor<float> z2 = z.clone();
  z2[0] += 0.5f;
  Var<float> w3 = g.map_latent(Var<float>(z2));
  double diff0 = 0, diff_rest = 0;
  for (int64_t j = 0; j < 8; ++j) {
    diff0 += std::abs(w3.val()[j] - w1.val()[j]);
    diff_rest += std::abs(w3.val()[8 + j] - w1.val()[8 + j]);
  }
  EXPECT_GT(diff0, 1e-6);      // perturbed row moved
  EXPECT_LT(diff_rest, 1e-6);  // untouched rows stay put (row independence)

  EXPECT_THROW(g.map_latent(Var<float>(Tensor<float>::zeros({2, 5}))), ShapeError);
}

TEST(Synthesis, BoundedDeterministicAndFeatureStack) {
  GenConfig cfg = tiny_config();
  Generator<float> g(cfg, 11);
  Rng rng(7);
  Var<float> wplus(Tensor<float>::randn({2, g.num_style_rows(), cfg.d_w}, rng));

  auto out1 = g.synthesize(wplus, nullptr, nullptr, true);
  auto out2 = g.synthesize(wplus);
  ASSERT_EQ(out1.image.shape(), (Shape{2, 1, 16, 16}));
  EXPECT_TRUE(bit_equal(out1.image.val(), out2.image.val()));
  for (int64_t i = 0; i < out1.image.numel(); ++i) {
    ASSERT_LE(out1.image.val()[i], 1.0f);
    ASSERT_GE(out1.image.val()[i], -1.0f);
  }
  ASSERT_EQ(out1.features.shape(), (Shape{2, g.feature_channels(), 16, 16}));
  EXPECT_EQ(g.feature_channels(), 12 + 2 * 8 + 2 * 6);

  EXPECT_THROW(g.synthesize(Var<float>(Tensor<float>::zeros({2, 3, cfg.d_w}))), ShapeError);
}

TEST(Synthesis, BroadcastMatchesManualWPlus) {
  GenConfig cfg = tiny_config();
  Generator<float> g(cfg, 11);
  Rng rng(9);
  Var<float> w(Tensor<float>::randn({2, cfg.d_w}, rng));
  Var<float> wplus = g.broadcast_w(w);

  Tensor<float> manual({2, g.num_style_rows(), cfg.d_w});
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t r = 0; r < g.num_style_rows(); ++r)
      for (int64_t j = 0; j < cfg.d_w; ++j)
        manual[(n * g.num_style_rows() + r) * cfg.d_w + j] = w.val()[n * cfg.d_w + j];

  auto a = g.synthesize(wplus);
  auto b = g.synthesize(Var<float>(manual));
  EXPECT_TRUE(bit_equal(a.image.val(), b.image.val()));
}

TEST(Synthesis, NoiseInputs) {
  GenConfig cfg = tiny_config();
  Generator<float> g(cfg, 11);
  // Noise strengths start at zero; give them bite for this test.
  for (auto& [name, v] : g.params().items())
    if (name.find("noise") != std::string::npos) v.mutable_val().fill(0.5f);

  Rng rng(3);
  Var<float> wplus(Tensor<float>::randn({1, g.num_style_rows(), cfg.d_w}, rng));
  Rng n1(100), n2(100), n3(101);
  auto a = g.synthesize(wplus, nullptr, &n1);
  auto b = g.synthesize(wplus, nullptr, &n2);
  auto c = g.synthesize(wplus, nullptr, &n3);
  auto quiet = g.synthesize(wplus);
  EXPECT_TRUE(bit_equal(a.image.val(), b.image.val()));  // same noise stream
  EXPECT_FALSE(bit_equal(a.image.val(), c.image.val()));
  EXPECT_FALSE(bit_equal(a.image.val(), quiet.image.val()));
}

TEST(LabelBranch, PointwiseStructure) {
  GenConfig cfg = tiny_config();
  Generator<float> g(cfg, 11);
  int64_t F = g.feature_channels();
  Rng rng(13);
  Tensor<float> feats = Tensor<float>::randn({1, F, 16, 16}, rng);
  Var<float> logits = g.label_logits(Var<float>(feats));
  ASSERT_EQ(logits.shape(), (Shape{1, 3, 16, 16}));

  Var<float> probs = softmax_channels(logits);
  for (int64_t p = 0; p < 256; ++p) {
    float s = probs.val()[p] + probs.val()[256 + p] + probs.val()[512 + p];
    ASSERT_NEAR(s, 1.0f, 1e-5f);
  }

  // Swapping two pixels' feature vectors must swap exactly their logits.
  Tensor<float> swapped = feats.clone();
  int64_t pa = 3 * 16 + 4, pb = 11 * 16 + 9;
  for (int64_t c = 0; c < F; ++c)
    std::swap(swapped[c * 256 + pa], swapped[c * 256 + pb]);
  Var<float> logits2 = g.label_logits(Var<float>(swapped));
  for (int64_t c = 0; c < 3; ++c) {
    EXPECT_EQ(logits.val()[c * 256 + pa], logits2.val()[c * 256 + pb]);
    EXPECT_EQ(logits.val()[c * 256 + pb], logits2.val()[c * 256 + pa]);
    for (int64_t p = 0; p < 256; ++p)
      if (p != pa && p != pb) ASSERT_EQ(logits.val()[c * 256 + p], logits2.val()[c * 256 + p]);
  }

  // Constant input -> constant per-pixel output.
  Var<float> zlog = g.label_logits(Var<float>(Tensor<float>::zeros({1, F, 16, 16})));
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t p = 1; p < 256; ++p)
      ASSERT_EQ(zlog.val()[c * 256 + p], zlog.val()[c * 256]);

  EXPECT_THROW(g.label_logits(Var<float>(Tensor<float>::zeros({1, F + 1, 16, 16}))), ShapeError);
}

TEST(DiscriminatorNet, ScoresAndShapes) {
  GenConfig cfg = tiny_config();
  Discriminator<float> d(cfg, 21);
  Rng rng(17);
  Tensor<float> batch = Tensor<float>::randn({4, 1, 16, 16}, rng);
  // Rows 2 and 3 duplicate row 0.
  for (int64_t i = 0; i < 256; ++i) {
    batch[2 * 256 + i] = batch[i];
    batch[3 * 256 + i] = batch[i];
  }
  Var<float> scores = d(Var<float>(batch));
  ASSERT_EQ(scores.shape(), (Shape{4}));
  EXPECT_TRUE(scores.val().all_finite());
  EXPECT_NEAR(scores.val()[2], scores.val()[0], 1e-4f);
  EXPECT_NEAR(scores.val()[3], scores.val()[0], 1e-4f);

  EXPECT_THROW(d(Var<float>(Tensor<float>::zeros({1, 1, 8, 8}))), ShapeError);
}

TEST(EncoderNet, ShapesLabelSensitivityAndDeterminism) {
  GenConfig cfg = tiny_config();
  Encoder<float> e(cfg, 31);
  Rng rng(19);
  Tensor<float> img = Tensor<float>::randn({2, 1, 16, 16}, rng);

  auto o1 = e.encode(Var<float>(img), Domain::target);
  auto o2 = e.encode(Var<float>(img.clone()), Domain::target);
  ASSERT_EQ(o1.wplus.shape(), (Shape{2, e.num_style_rows(), cfg.d_w}));
  EXPECT_TRUE(bit_equal(o1.wplus.val(), o2.wplus.val()));
  ASSERT_EQ(o1.injected.size(), 2u);
  ASSERT_EQ(o1.injected.at(16).shape(), (Shape{2, 6, 16, 16}));
  ASSERT_EQ(o1.injected.at(8).shape(), (Shape{2, 8, 8, 8}));

  auto flipped = e.encode(Var<float>(img), Domain::source);
  double delta = 0;
  for (int64_t i = 0; i < o1.wplus.numel(); ++i)
    delta += std::abs(o1.wplus.val()[i] - flipped.wplus.val()[i]);
  EXPECT_GT(delta, 1e-3);

  EXPECT_THROW(e.encode(Var<float>(Tensor<float>::zeros({1, 2, 16, 16})), Domain::source),
               ShapeError);
}

TEST(EncoderNet, RoundTripThroughGeneratorRoutesGradients) {
  GenConfig cfg = tiny_config();
  Generator<float> g(cfg, 11);
  Discriminator<float> d(cfg, 21);
  Encoder<float> e(cfg, 31);
  Rng rng(23);
  Var<float> x(Tensor<float>::randn({2, 1, 16, 16}, rng));

  // Reconstruction pass with the generator frozen: only the encoder learns.
  g.params().set_requires_grad(false);
  auto eo = e.encode(x, Domain::target);
  auto hooks = e.make_hooks(eo);
  auto out = g.synthesize(eo.wplus, &hooks);
  ASSERT_EQ(out.image.shape(), (Shape{2, 1, 16, 16}));

  Var<float> loss = mse_loss(x, out.image);
  EXPECT_TRUE(loss.val().all_finite());
  backward(loss);

  EXPECT_TRUE(grads_present_and_finite(e.params()));
  EXPECT_TRUE(grads_absent(g.params()));
  EXPECT_TRUE(grads_absent(d.params()));
  g.params().set_requires_grad(true);
}

TEST(Layers, ModulatedConvGradients) {
  ParamStore<double> ps(41);
  ModulatedConv<double> mc(ps, "mc", 2, 3, 3, 4);
  Rng rng(43);
  Var<double> x(Tensor<double>::randn({2, 2, 5, 5}, rng), true);
  Var<double> style(Tensor<double>::randn({2, 4}, rng), true);
  Var<double> probe(Tensor<double>::randn({2, 3, 5, 5}, rng));

  std::vector<Var<double>> leaves = ps.vars();
  leaves.push_back(x);
  leaves.push_back(style);
  perturbation_gradcheck([&] { return sum(mul(mc(x, style), probe)); }, leaves, 1e-5, 1e-6);
}

TEST(Layers, EqualizedLayersGradients) {
  ParamStore<double> ps(47);
  EqLinear<double> fc(ps, "fc", 3, 4, 0.5, std::sqrt(2.0), 0.1);
  EqConv2d<double> cv(ps, "cv", 2, 3, 3, 1.0, std::sqrt(2.0));
  Rng rng(51);
  Var<double> xl(Tensor<double>::randn({2, 3}, rng), true);
  Var<double> xc(Tensor<double>::randn({1, 2, 4, 4}, rng), true);
  Var<double> probe_l(Tensor<double>::randn({2, 4}, rng));
  Var<double> probe_c(Tensor<double>::randn({1, 3, 4, 4}, rng));

  std::vector<Var<double>> leaves = ps.vars();
  leaves.push_back(xl);
  leaves.push_back(xc);
  perturbation_gradcheck(
      [&] { return add(sum(mul(fc(xl), probe_l)), sum(mul(cv(xc), probe_c))); }, leaves, 1e-5,
      1e-6);
}

TEST(Layers, PixelNormAndMinibatchStddevGradients) {
  Rng rng(53);
  check_grad(
      [](const std::vector<Var<double>>& v) {
        Var<double> probe(Tensor<double>::full({3, 4}, 0.7));
        return sum(mul(pixel_norm(v[0]), probe));
      },
      {vda::testing::random_tensor({3, 4}, rng)});
  check_grad(
      [](const std::vector<Var<double>>& v) {
        Var<double> probe(Tensor<double>::full({2, 3, 2, 2}, 0.3));
        return sum(mul(minibatch_stddev(v[0]), probe));
      },
      {vda::testing::random_tensor({2, 2, 2, 2}, rng)}, 1e-5, 1e-5);
}

TEST(Losses, HandValuesAndEdgeCases) {
  // MSE of a single differing pixel out of four.
  Var<double> x(Tensor<double>::zeros({1, 1, 2, 2}));
  Tensor<double> xh_t = Tensor<double>::zeros({1, 1, 2, 2});
  xh_t[0] = 1.0;
  Var<double> xh(xh_t);
  EXPECT_NEAR(reconstruction_loss(x, xh, 1.0, 0.0, (const PerceptualNet<double>*)nullptr).val()[0],
              0.25, 1e-12);

  PerceptualNet<double> perc(7);
  Rng rng(57);
  Var<double> a(Tensor<double>::randn({1, 1, 8, 8}, rng));
  EXPECT_NEAR(reconstruction_loss(a, a, 1.0, 0.8, &perc).val()[0], 0.0, 1e-12);
  Var<double> b(Tensor<double>::randn({1, 1, 8, 8}, rng));
  double dab = perc.distance(a, b).val()[0];
  double dba = perc.distance(b, a).val()[0];
  EXPECT_NEAR(dab, dba, 1e-12);
  EXPECT_GT(dab, 0.0);

  // Uniform logits: cross-entropy is ln 3 per pixel.
  Var<double> logits(Tensor<double>::zeros({2, 3, 4, 4}));
  Tensor<double> y_t = Tensor<double>::zeros({2, 3, 4, 4});
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t p = 0; p < 16; ++p) y_t[(n * 3 + 1) * 16 + p] = 1.0;
  Var<double> y(y_t);
  EXPECT_NEAR(cross_entropy_loss(logits, y).val()[0], std::log(3.0), 1e-12);

  // Saturated correct prediction: both terms nearly vanish.
  Tensor<double> strong = Tensor<double>::zeros({2, 3, 4, 4});
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t p = 0; p < 16; ++p) strong[(n * 3 + 1) * 16 + p] = 20.0;
  EXPECT_LT(segmentation_loss(Var<double>(strong), y, 1.0, 1.0).val()[0], 1e-3);

  EXPECT_THROW(mse_loss(x, Var<double>(Tensor<double>::zeros({1, 1, 2, 3}))), ShapeError);
  EXPECT_THROW(segmentation_loss(logits, Var<double>(Tensor<double>::zeros({2, 3, 4, 5})), 1, 1),
               ShapeError);
}

TEST(Losses, ReconstructionGradientMatchesFiniteDifferences) {
  PerceptualNet<double> perc(61);
  Rng rng(63);
  for (int rep = 0; rep < 3; ++rep) {
    Tensor<double> x = vda::testing::random_tensor({1, 1, 8, 8}, rng);
    Tensor<double> xh = vda::testing::random_tensor({1, 1, 8, 8}, rng);
    check_grad(
        [&perc](const std::vector<Var<double>>& v) {
          return reconstruction_loss(v[0], v[1], 1.0, 0.8, &perc);
        },
        {x, xh}, 1e-5, 1e-6);
  }
}

TEST(Losses, SegmentationGradientMatchesFiniteDifferences) {
  Rng rng(67);
  for (int rep = 0; rep < 3; ++rep) {
    Tensor<double> logits = vda::testing::random_tensor({1, 3, 4, 4}, rng);
    Tensor<double> y = Tensor<double>::zeros({1, 3, 4, 4});
    for (int64_t p = 0; p < 16; ++p) y[rng.uniform_int(3) * 16 + p] = 1.0;
    check_grad(
        [&y](const std::vector<Var<double>>& v) {
          return segmentation_loss(v[0], Var<double>(y), 1.0, 1.0);
        },
        {logits}, 1e-5, 1e-6);
  }
}

TEST(Losses, GanObjectivesAndR1) {
  GenConfig small;
  small.image_size = 8;
  small.z_dim = 4;
  small.d_w = 4;
  small.map_layers = 1;
  small.widths = {{4, 6}, {8, 4}};
  Discriminator<double> d(small, 71);
  Rng rng(73);

  Var<double> real(Tensor<double>::randn({2, 1, 8, 8}, rng), true);
  Var<double> fake(Tensor<double>::randn({2, 1, 8, 8}, rng));
  Var<double> sr = d(real);
  Var<double> sf = d(fake);
  EXPECT_GT(gan_loss_d(sr, sf).val()[0], 0.0);
  EXPECT_GT(gan_loss_g(sf).val()[0], 0.0);

  Var<double> pen = r1_penalty(sr, real);
  ASSERT_GE(pen.val()[0], 0.0);
  d.params().zero_grad();
  backward(pen);
  // The penalty is a function of critic weights through the inner gradient;
  // its backward exercises the double-backward path end to end.
  int with_grad = 0;
  for (const auto& [name, v] : d.params().items())
    if (v.grad_steps() > 0) {
      ASSERT_TRUE(v.grad().all_finite()) << name;
      ++with_grad;
    }
  EXPECT_GT(with_grad, 0);
}

TEST(Optimizer, DescendsAndSkipsUntouchedParams) {
  Var<float> p(Tensor<float>::full({1}, 10.0f), true);
  Var<float> q(Tensor<float>::full({1}, 5.0f), true);
  Adam<float> opt({{p, 1.0}, {q, 1.0}}, 0.1);

  Tensor<float> q_before = q.val().clone();
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    Var<float> loss = square(add_scalar(p, -3.0));  // (p-3)^2; q not in graph
    backward(loss);
    opt.step();
  }
  EXPECT_NEAR(p.val()[0], 3.0f, 1e-2f);
  EXPECT_TRUE(bit_equal(q.val(), q_before));
  EXPECT_EQ(opt.step_counts()[0], 200);
  EXPECT_EQ(opt.step_counts()[1], 0);
}

TEST(Optimizer, LrMultiplierScalesFirstStep)
{
  Var<float> a(Tensor<float>::full({1}, 1.0f), true);
  Var<float> b(Tensor<float>::full({1}, 1.0f), true);
  Adam<float> opt({{a, 1.0}, {b, 0.1}}, 0.05);
  opt.zero_grad();
  backward(add(square(a), square(b)));
  opt.step();
  double da = 1.0 - a.val()[0], db = 1.0 - b.val()[0];
  // Adam normalizes by grad magnitude, so the first step equals lr * lr_mul.
  EXPECT_NEAR(da, 0.05, 1e-6);
  EXPECT_NEAR(db, 0.005, 1e-6);
}

TEST(Optimizer, EmaTracksAndRestores) {
  ParamStore<float> ps(81);
  Var<float> w = ps.add("w", Tensor<float>::full({2}, 1.0f));
  EmaCopy<float> ema(ps, 0.9);
  w.mutable_val().fill(2.0f);
  ema.update(ps);
  // shadow = 0.9*1 + 0.1*2
  EXPECT_NEAR(ema.tensors()[0][0], 1.1f, 1e-6f);

  ParamStore<float> ps2(82);
  Var<float> w2 = ps2.add("w", Tensor<float>::zeros({2}));
  ema.copy_to(ps2);
  EXPECT_NEAR(w2.val()[0], 1.1f, 1e-6f);
}

TEST(Checkpointing, RoundTripAndMismatches) {
  auto dir = std::filesystem::temp_directory_path() / "vda_ckpt_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "state.ckpt";

  GenConfig cfg = tiny_config();
  Generator<float> g1(cfg, 101), g2(cfg, 202);
  Discriminator<float> d1(cfg, 103), d2(cfg, 204);
  ASSERT_FALSE(bit_equal(g1.params().items()[0].second.val(), g2.params().items()[0].second.val()));

  save_params<float>(path, {{"g", &g1.params()}, {"d", &d1.params()}});
  load_params<float>(path, {{"g", &g2.params()}, {"d", &d2.params()}});
  for (size_t i = 0; i < g1.params().items().size(); ++i)
    ASSERT_TRUE(bit_equal(g1.params().items()[i].second.val(), g2.params().items()[i].second.val()))
        << g1.params().items()[i].first;

  // Different architecture refuses to load.
  GenConfig other = cfg;
  other.widths[16] = 7;
  Generator<float> g3(other, 105);
  Discriminator<float> d3(other, 106);
  EXPECT_THROW((load_params<float>(path, {{"g", &g3.params()}, {"d", &d3.params()}})), IoError);
  EXPECT_THROW((load_params<float>(dir / "missing.ckpt", {{"g", &g2.params()}})), IoError);

  std::filesystem::remove_all(dir);
}

TEST(Registry, ArchitectureIsDeterministic) {
  GenConfig cfg = tiny_config();
  Generator<float> a(cfg, 11), b(cfg, 11), c(cfg, 12);
  EXPECT_EQ(a.params().arch_hash(), b.params().arch_hash());
  EXPECT_EQ(a.params().arch_hash(), c.params().arch_hash());  // hash ignores values
  EXPECT_EQ(a.params().scalar_count(), b.params().scalar_count());
  for (size_t i = 0; i < a.params().items().size(); ++i)
    ASSERT_TRUE(bit_equal(a.params().items()[i].second.val(), b.params().items()[i].second.val()));
  EXPECT_FALSE(
      bit_equal(a.params().items()[0].second.val(), c.params().items()[0].second.val()));
}
