#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "yffn/common.hpp"
#include "yffn/dataset.hpp"
#include "yffn/metrics.hpp"

using namespace yffn;

namespace {

using oracle::ref_ap;
using oracle::ref_map;
using oracle::ref_match_image;
using oracle::RefOutcome;

BBox box_at(double cx, double cy, double w = 0.1, double h = 0.1) { return {cx, cy, w, h}; }

}  // namespace

TEST_CASE("match_detections basic outcomes") {
  MatchingConfig cfg{0.5, 0.0};

  SUBCASE("one detection exactly on one ground truth") {
    std::vector<Detection> dets = {{box_at(0.5, 0.5), 0.9, 0}};
    std::vector<Annotation> gts = {{box_at(0.5, 0.5), 0}};
    const MatchResult m = match_detections(dets, gts, cfg);
    CHECK(m.counts.tp == 1);
    CHECK(m.counts.fp == 0);
    CHECK(m.counts.fn == 0);
    CHECK(m.flags[0].is_tp);
    CHECK(m.flags[0].gt_index == 0);
  }

  SUBCASE("no detections leaves every ground truth unmatched") {
    std::vector<Annotation> gts = {{box_at(0.2, 0.2), 0}, {box_at(0.8, 0.8), 0}};
    const MatchResult m = match_detections({}, gts, cfg);
    CHECK(m.counts.fn == 2);
    CHECK(m.counts.tp == 0);
  }

  SUBCASE("class mismatch never matches") {
    std::vector<Detection> dets = {{box_at(0.5, 0.5), 0.9, 1}};
    std::vector<Annotation> gts = {{box_at(0.5, 0.5), 0}};
    const MatchResult m = match_detections(dets, gts, cfg);
    CHECK(m.counts.tp == 0);
    CHECK(m.counts.fp == 1);
    CHECK(m.counts.fn == 1);
  }

  SUBCASE("greedy order on a crafted 3x2 overlap pattern") {
    // d0 (conf .9) overlaps g0 best; d1 (conf .8) then takes g1; d2 left FP.
    std::vector<Annotation> gts = {{box_at(0.3, 0.3, 0.2, 0.2), 0}, {box_at(0.7, 0.7, 0.2, 0.2), 0}};
    std::vector<Detection> dets = {
        {box_at(0.31, 0.3, 0.2, 0.2), 0.9, 0},   // iou with g0 high
        {box_at(0.69, 0.7, 0.2, 0.2), 0.8, 0},   // iou with g1 high
        {box_at(0.3, 0.32, 0.2, 0.2), 0.7, 0},   // g0 already taken
    };
    const MatchResult m = match_detections(dets, gts, cfg);
    CHECK(m.counts.tp == 2);
    CHECK(m.counts.fp == 1);
    CHECK(m.counts.fn == 0);
    CHECK(m.flags[0].gt_index == 0);
    CHECK(m.flags[1].gt_index == 1);
    CHECK_FALSE(m.flags[2].is_tp);
  }
}

TEST_CASE("fnr and fdr definitions") {
  CHECK(fnr({1, 0, 1}) == 0.5);
  CHECK(fdr({5, 0, 0}) == 0.0);
  CHECK(fnr({0, 0, 0}) == 0.0);  // zero denominator convention
  CHECK(fdr({0, 0, 0}) == 0.0);
  // tp=37, fn=63 -> 63/100 exactly
  CHECK(fnr({37, 0, 63}) == doctest::Approx(0.63).epsilon(1e-15));
  CHECK(fnr({37, 0, 63}) == 63.0 / 100.0);
}

TEST_CASE("average_precision") {
  SUBCASE("all true positives covering all ground truth") {
    std::vector<DetectionMatch> flags;
    for (int i = 0; i < 4; ++i) flags.push_back({0.9 - 0.1 * i, 0, true, i});
    CHECK(average_precision(flags, 4) == 1.0);
  }

  SUBCASE("all false positives") {
    std::vector<DetectionMatch> flags;
    for (int i = 0; i < 4; ++i) flags.push_back({0.9 - 0.1 * i, 0, false, -1});
    CHECK(average_precision(flags, 4) == 0.0);
  }

  SUBCASE("empty ground truth conventions") {
    CHECK(average_precision({}, 0) == 1.0);
    CHECK(average_precision({{0.5, 0, false, -1}}, 0) == 0.0);
  }

  SUBCASE("five-detection mixed case matches the explicit PR rectangle sum") {
    // TP, FP, TP, FP, TP against 4 ground truths
    std::vector<DetectionMatch> flags = {
        {0.9, 0, true, 0}, {0.8, 0, false, -1}, {0.7, 0, true, 1},
        {0.6, 0, false, -1}, {0.5, 0, true, 2},
    };
    // points: (1/4,1), (1/4,1/2), (2/4,2/3), (2/4,1/2), (3/4,3/5)
    // envelope at recall steps: 1 @ 1/4, 2/3 @ 2/4, 3/5 @ 3/4
    const double expect = 0.25 * 1.0 + 0.25 * (2.0 / 3.0) + 0.25 * 0.6;
    CHECK(average_precision(flags, 4) == doctest::Approx(expect).epsilon(1e-12));
    std::vector<RefOutcome> ref;
    for (const auto& f : flags) ref.push_back({f.confidence, f.is_tp});
    CHECK(average_precision(flags, 4) == doctest::Approx(ref_ap(ref, 4)).epsilon(1e-12));
  }
}

TEST_CASE("mean_ap") {
  CHECK(mean_ap({0.7}) == 0.7);
  CHECK(mean_ap({0.4, 0.6}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(mean_ap({}), std::invalid_argument);
  Rng rng(1201);
  std::vector<double> aps;
  double acc = 0;
  for (int i = 0; i < 7; ++i) {
    aps.push_back(rng.uniform(0.0, 1.0));
    acc += aps.back();
  }
  CHECK(mean_ap(aps) == doctest::Approx(acc / 7.0).epsilon(1e-15));
}

TEST_CASE("containment_rate") {
  MatchingConfig cfg{0.1, 0.0};  // small-inside-large pairs have IoU ~0.11
  std::vector<Annotation> gts = {{box_at(0.3, 0.3, 0.3, 0.3), 0}, {box_at(0.7, 0.7, 0.3, 0.3), 0}};

  SUBCASE("every matched detection inside its ground truth") {
    std::vector<Detection> dets = {{box_at(0.3, 0.3, 0.1, 0.1), 0.9, 0},
                                   {box_at(0.7, 0.7, 0.1, 0.1), 0.8, 0}};
    const MatchResult m = match_detections(dets, gts, cfg);
    CHECK(containment_rate(dets, gts, m.flags) == 1.0);
  }

  SUBCASE("none contained") {
    std::vector<Detection> dets = {{box_at(0.3, 0.3, 0.4, 0.4), 0.9, 0}};
    const MatchResult m = match_detections(dets, gts, cfg);
    REQUIRE(m.counts.tp == 1);
    CHECK(containment_rate(dets, gts, m.flags) == 0.0);
  }

  SUBCASE("no matches yields zero") {
    CHECK(containment_rate({}, gts, {}) == 0.0);
  }

  SUBCASE("mixed set equals per-pair enumeration") {
    std::vector<Detection> dets = {{box_at(0.3, 0.3, 0.1, 0.1), 0.9, 0},
                                   {box_at(0.7, 0.7, 0.35, 0.2), 0.8, 0}};
    const MatchResult m = match_detections(dets, gts, cfg);
    long matched = 0, inside = 0;
    for (std::size_t i = 0; i < m.flags.size(); ++i) {
      if (m.flags[i].is_tp) {
        ++matched;
        if (containment(dets[i].bbox, gts[m.flags[i].gt_index].bbox)) ++inside;
      }
    }
    REQUIRE(matched > 0);
    CHECK(containment_rate(dets, gts, m.flags) ==
          doctest::Approx(static_cast<double>(inside) / matched));
  }
}

TEST_CASE("evaluate end to end") {
  SUBCASE("perfect predictions") {
    Dataset data;
    Rng rng(1301);
    for (int img = 0; img < 5; ++img) {
      ImageSample s;
      for (int b = 0; b < 3; ++b) {
        Annotation a{box_at(0.2 + 0.3 * b, 0.2 + 0.2 * img / 5.0), 0};
        s.annotations.push_back(a);
        s.detections.push_back({a.bbox, rng.uniform(0.5, 1.0), 0});
      }
      data["img" + std::to_string(img)] = s;
    }
    const EvalReport r = evaluate(data, {0.25, 0.5}, MatchingConfig{0.5, 0.25});
    CHECK(r.map_at.at(0.25) == 1.0);
    CHECK(r.map_at.at(0.5) == 1.0);
    CHECK(r.fnr == 0.0);
    CHECK(r.fdr == 0.0);
    CHECK(r.containment_rate == 1.0);  // identical boxes contain each other
  }

  SUBCASE("empty predictions with ground truth present") {
    Dataset data;
    ImageSample s;
    s.annotations.push_back({box_at(0.5, 0.5), 0});
    data["only"] = s;
    const EvalReport r = evaluate(data, {0.25, 0.5}, MatchingConfig{0.5, 0.25});
    CHECK(r.fnr == 1.0);
    CHECK(r.map_at.at(0.25) == 0.0);
    CHECK(r.map_at.at(0.5) == 0.0);
    CHECK(r.counts.fn == 1);
  }

  SUBCASE("generated fixtures match the reference evaluator") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Fixture fx = gen_fixture_dataset(8, 0.1, 7000 + seed);
      Dataset data;
      for (const auto& e : fx.manifest.entries) {
        data[e.image_id] = {fx.detections.at(e.image_id), fx.labels.at(e.image_id)};
      }
      const EvalReport r = evaluate(data, {0.25, 0.5}, MatchingConfig{0.5, 0.25});
      CHECK(r.map_at.at(0.25) == doctest::Approx(ref_map(data, 0.25)).epsilon(1e-12));
      CHECK(r.map_at.at(0.5) == doctest::Approx(ref_map(data, 0.5)).epsilon(1e-12));
      CHECK(r.map_at.at(0.25) >= r.map_at.at(0.5));  // looser overlap keeps TPs

      // operating-point counts against a direct recount
      long tp = 0, fp = 0, fn = 0;
      for (const auto& [key, sample] : data) {
        const auto kept = confidence_filter(sample.detections, 0.25);
        long fn_img = 0;
        const auto outcomes = ref_match_image(kept, sample.annotations, 0.5, &fn_img);
        for (const auto& o : outcomes) (o.tp ? tp : fp) += 1;
        fn += fn_img;
      }
      CHECK(r.counts.tp == tp);
      CHECK(r.counts.fp == fp);
      CHECK(r.counts.fn == fn);
    }
  }

  SUBCASE("constructed composition reproduces exact counts") {
    const Fixture fx = gen_fixture_with_counts(5, 2, 3, 99);
    Dataset data;
    for (const auto& e : fx.manifest.entries) {
      data[e.image_id] = {fx.detections.at(e.image_id), fx.labels.at(e.image_id)};
    }
    const EvalReport r = evaluate(data, {0.5}, MatchingConfig{0.5, 0.25});
    CHECK(r.counts.tp == 5);
    CHECK(r.counts.fp == 2);
    CHECK(r.counts.fn == 3);
    CHECK(r.fnr == doctest::Approx(3.0 / 8.0));
    CHECK(r.fdr == doctest::Approx(2.0 / 7.0));
  }
}

TEST_CASE("evaluate keyed-input validation") {
  std::map<std::string, std::vector<Detection>> dets;
  std::map<std::string, std::vector<Annotation>> gts;
  dets["a"] = {};
  gts["a"] = {};
  CHECK_NOTHROW(merge_keyed(dets, gts));
  gts["b"] = {};
  CHECK_THROWS_WITH_AS(merge_keyed(dets, gts), doctest::Contains("'b'"), std::invalid_argument);
  gts.erase("b");
  dets["c"] = {};
  CHECK_THROWS_WITH_AS(merge_keyed(dets, gts), doctest::Contains("'c'"), std::invalid_argument);
}

TEST_CASE("threshold monotonicity properties") {
  Rng rng(1401);
  for (int trial = 0; trial < 20; ++trial) {
    // random image with overlapping boxes
    ImageSample s;
    const int n_gt = static_cast<int>(rng.uniform_int(1, 5));
    for (int i = 0; i < n_gt; ++i) {
      s.annotations.push_back({{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                                rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)},
                               0});
    }
    const int n_det = static_cast<int>(rng.uniform_int(0, 7));
    for (int i = 0; i < n_det; ++i) {
      const Annotation& base = s.annotations[rng.uniform_int(0, n_gt - 1)];
      Detection d;
      d.bbox = base.bbox;
      d.bbox.cx += rng.uniform(-0.1, 0.1);
      d.bbox.cy += rng.uniform(-0.1, 0.1);
      d.confidence = rng.uniform(0.0, 1.0);
      s.detections.push_back(d);
    }
    Dataset data;
    data["img"] = s;

    // mAP monotone in the IoU threshold
    const EvalReport r = evaluate(data, {0.1, 0.25, 0.5, 0.75}, MatchingConfig{0.5, 0.25});
    CHECK(r.map_at.at(0.1) >= r.map_at.at(0.25));
    CHECK(r.map_at.at(0.25) >= r.map_at.at(0.5));
    CHECK(r.map_at.at(0.5) >= r.map_at.at(0.75));

    // raising the confidence threshold never lowers FNR / raises FP count
    long prev_fp = -1;
    double prev_fnr = -1;
    bool first = true;
    for (double conf : {0.0, 0.25, 0.5, 0.9}) {
      const EvalReport rc = evaluate(data, {}, MatchingConfig{0.5, conf});
      if (!first) {
        CHECK(rc.fnr >= prev_fnr);
        CHECK(rc.counts.fp <= prev_fp);
      }
      first = false;
      prev_fnr = rc.fnr;
      prev_fp = rc.counts.fp;
    }
  }
}
