#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "vda/core/errors.hpp"
#include "vda/core/rng.hpp"
#include "vda/data/phantom.hpp"

namespace vda {

/// Cohort sizes for one experiment. Defaults follow the usual protocol:
/// many labeled source volumes, a pool of unlabeled target volumes, and a
/// handful of labeled target volumes for the semi-supervised part.
struct SplitCounts {
  int source_labeled = 45;
  int target_unlabeled = 17;
  int target_labeled = 3;
  int val = 4;            // labeled, target domain
  int test_source = 4;
  int test_target = 4;

  void validate() const {
    for (int c : {source_labeled, target_unlabeled, target_labeled, val, test_source, test_target})
      if (c < 0) throw ConfigError("split: negative cohort size");
  }
};

struct DatasetSplit {
  std::vector<LabeledSample> source_labeled;
  std::vector<LabeledSample> target_unlabeled;  // masks kept for post-hoc eval only
  std::vector<LabeledSample> target_labeled;
  std::vector<LabeledSample> val;
  std::vector<LabeledSample> test_source;
  std::vector<LabeledSample> test_target;
};

namespace detail {

inline std::string sample_id(Domain d, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%s-%03d", d == Domain::source ? "src" : "tgt", index);
  return buf;
}

inline std::vector<LabeledSample> draw_cohort(const PhantomSpec& spec, uint64_t domain_seed,
                                              int count, int& index) {
  std::vector<LabeledSample> out;
  out.reserve(size_t(count));
  for (int i = 0; i < count; ++i, ++index) {
    uint64_t seed = mix_seed(domain_seed, uint64_t(index));
    LabeledSample s = generate_sample(spec, seed);
    s.id = sample_id(spec.domain, index);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

/// Generates all cohorts from a single experiment seed. Sample identity is a
/// pure function of (seed, domain, running index), so ids never collide and
/// repeated calls reproduce every pixel.
inline DatasetSplit make_split(const PhantomSpec& source_spec, const PhantomSpec& target_spec,
                               const SplitCounts& counts, uint64_t seed) {
  source_spec.validate();
  target_spec.validate();
  counts.validate();
  if (source_spec.domain != Domain::source || target_spec.domain != Domain::target)
    throw ConfigError("split: specs passed in wrong order");
  if (source_spec.radius_min_px <= target_spec.radius_min_px)
    throw ConfigError("split: source vessels must be thicker than target vessels");
  if (source_spec.bright_vessels == target_spec.bright_vessels)
    throw ConfigError("split: domains must differ in vessel polarity");

  uint64_t src_seed = mix_seed(seed, 0x5ab1e);
  uint64_t tgt_seed = mix_seed(seed, 0x7a12e7);

  DatasetSplit split;
  int si = 0, ti = 0;
  split.source_labeled = detail::draw_cohort(source_spec, src_seed, counts.source_labeled, si);
  split.test_source = detail::draw_cohort(source_spec, src_seed, counts.test_source, si);
  split.target_unlabeled = detail::draw_cohort(target_spec, tgt_seed, counts.target_unlabeled, ti);
  split.target_labeled = detail::draw_cohort(target_spec, tgt_seed, counts.target_labeled, ti);
  split.val = detail::draw_cohort(target_spec, tgt_seed, counts.val, ti);
  split.test_target = detail::draw_cohort(target_spec, tgt_seed, counts.test_target, ti);
  return split;
}

}  // namespace vda
