#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "sldc/classifier.hpp"
#include "sldc/drift_sim.hpp"
#include "sldc/error.hpp"
#include "sldc/log.hpp"

using namespace sldc;

namespace {

const std::vector<std::int32_t> kTwo{0, 1};

FeatureMatrix blobs(const std::vector<Vector>& centers, double sd, Eigen::Index per_class,
                    std::mt19937_64& rng, std::int32_t first_id = 0) {
  const Eigen::Index d = centers.front().size();
  Matrix v(per_class * static_cast<Eigen::Index>(centers.size()), d);
  std::vector<std::int32_t> labels;
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (Eigen::Index i = 0; i < per_class; ++i) {
      v.row(static_cast<Eigen::Index>(labels.size())) =
          (centers[c] + oracle::random_matrix(d, 1, rng, sd).col(0)).transpose();
      labels.push_back(first_id + static_cast<std::int32_t>(c));
    }
  return FeatureMatrix(v, labels);
}

LinearClassifier random_classifier(Eigen::Index k, Eigen::Index d, std::mt19937_64& rng) {
  LinearClassifier clf(d);
  std::vector<std::int32_t> ids;
  for (Eigen::Index i = 0; i < k; ++i) ids.push_back(static_cast<std::int32_t>(3 * i + 1));
  clf = expand(clf, ids);
  clf.weight = oracle::random_matrix(k, d, rng);
  clf.bias = oracle::random_matrix(k, 1, rng).col(0);
  return clf;
}

}  // namespace

TEST_CASE("expand appends zero rows and preserves existing ones") {
  const LinearClassifier empty(3);
  const LinearClassifier two = expand(empty, kTwo);
  CHECK(two.weight == Matrix::Zero(2, 3));
  CHECK(two.bias == Vector::Zero(2));
  CHECK(two.class_ids == kTwo);

  std::mt19937_64 rng(61);
  LinearClassifier trained = two;
  trained.weight = oracle::random_matrix(2, 3, rng);
  trained.bias = oracle::random_matrix(2, 1, rng).col(0);
  const std::vector<std::int32_t> more{7, 2};
  const LinearClassifier three = expand(trained, more);
  CHECK(three.weight.topRows(2) == trained.weight);
  CHECK(three.bias.head(2) == trained.bias);
  CHECK(three.weight.bottomRows(2).isZero(0.0));
  CHECK(three.class_ids == std::vector<std::int32_t>{0, 1, 7, 2});
  CHECK(three.row_of(2) == 3);

  const Vector f = oracle::random_matrix(3, 1, rng).col(0);
  CHECK(three.logits(f).head(2) == trained.logits(f));

  const std::vector<std::int32_t> clash{4, 1};
  try {
    expand(trained, clash);
    FAIL("duplicate id accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Conflict);
  }
  const std::vector<std::int32_t> twice{5, 5};
  CHECK_THROWS_AS(expand(trained, twice), Error);
}

TEST_CASE("softmax over a class subset") {
  LinearClassifier clf = expand(LinearClassifier(2), std::vector<std::int32_t>{0, 1, 2, 3});
  const Vector f{{0.3, -1.2}};
  const std::vector<std::int32_t> three{3, 0, 2};
  const Vector uniform = softmax_probs(clf, f, three);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(uniform[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  clf.bias << 0.0, std::log(3.0), 50.0, -4.0;
  CHECK(softmax_probs(clf, f, std::vector<std::int32_t>{2})[0] == 1.0);
  const Vector p = softmax_probs(clf, f, kTwo);
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));

  std::mt19937_64 rng(62);
  clf.weight = oracle::random_matrix(4, 2, rng, 30.0);
  const std::vector<std::int32_t> all{0, 1, 2, 3};
  const Vector q = softmax_probs(clf, f, all);
  CHECK(std::abs(q.sum() - 1.0) <= 1e-12);
  CHECK(q.allFinite());
  LinearClassifier shifted = clf;
  shifted.bias.array() += 700.0;  // overflows without max-subtraction
  CHECK((softmax_probs(shifted, f, all) - q).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(softmax_probs(clf, f, std::vector<std::int32_t>{9}), Error);
}

TEST_CASE("cross-entropy training separates two blobs") {
  std::mt19937_64 rng(63);
  const FeatureMatrix data = blobs({Vector{{-2.0, 0.5}}, Vector{{2.0, -0.5}}}, 0.5, 200, rng);
  // Separability oracle: the hyperplane x0 = 0 splits the sample exactly when
  // every class-0 row has x0 < 0 and every class-1 row x0 > 0.
  bool separable = true;
  for (Eigen::Index i = 0; i < data.size(); ++i)
    separable &= (data.labels()[static_cast<std::size_t>(i)] == 0) == (data.values()(i, 0) < 0.0);
  REQUIRE(separable);

  const LinearClassifier start = expand(LinearClassifier(2), kTwo);
  const LinearClassifier clf = train_ce(start, data, kTwo, CeConfig{});
  CHECK(evaluate(clf, data) >= 0.99);
  CHECK(clf.weight == train_ce(start, data, kTwo, CeConfig{}).weight);

  CeConfig other;
  other.seed = 4;
  CHECK_FALSE(clf.weight == train_ce(start, data, kTwo, other).weight);

  CHECK_THROWS_AS(train_ce(start, data, std::vector<std::int32_t>{0}, CeConfig{}), Error);
}

TEST_CASE("single-class subset leaves the classifier unchanged") {
  std::mt19937_64 rng(64);
  LinearClassifier clf = random_classifier(3, 4, rng);
  const FeatureMatrix data(oracle::random_matrix(30, 4, rng), std::vector<std::int32_t>(30, 4));
  const LinearClassifier after = train_ce(clf, data, std::vector<std::int32_t>{4}, CeConfig{});
  CHECK(after.weight == clf.weight);
  CHECK(after.bias == clf.bias);
}

TEST_CASE("restricted training only touches subset rows") {
  std::mt19937_64 rng(65);
  LinearClassifier clf = random_classifier(4, 3, rng);
  const std::vector<std::int32_t> subset{7, 10};
  const FeatureMatrix data = blobs({Vector{{1.0, 0.0, 0.0}}, Vector{{0.0, 1.0, 0.0}}}, 0.1, 20, rng, 7);
  FeatureMatrix relabelled(data.values(), [&] {
    auto l = data.labels();
    for (auto& x : l) x = x == 7 ? 7 : 10;
    return l;
  }());
  const LinearClassifier after = train_ce(clf, relabelled, subset, CeConfig{});
  CHECK(after.weight.row(0) == clf.weight.row(0));
  CHECK(after.weight.row(1) == clf.weight.row(1));
  CHECK_FALSE(after.weight.row(2) == clf.weight.row(2));
}

TEST_CASE("config validation") {
  RefineConfig r;
  CHECK_NOTHROW(r.validate());
  r.batch_size = 0;
  CHECK_THROWS_AS(r.validate(), Error);
  r = {};
  r.lr_end = r.lr_start * 2;
  CHECK_THROWS_AS(r.validate(), Error);
  CeConfig c;
  c.steps = -1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("refinement on synthetic Gaussians") {
  // One class: every prediction is that class.
  GaussianBank one;
  one.insert({3, Vector::Ones(4), Matrix::Identity(4, 4), 10});
  const LinearClassifier lone = refine(expand(LinearClassifier(4), std::vector<std::int32_t>{3}), one, RefineConfig{});
  CHECK(evaluate(lone, sample(one.at(3), 200, 1)) == 1.0);

  // mu = ±5 e1, Σ = I: the Bayes error Φ(-5) is below 1e-6.
  const Eigen::Index d = 8;
  GaussianBank pair;
  Vector e1 = Vector::Zero(d);
  e1[0] = 5.0;
  pair.insert({0, -e1, Matrix::Identity(d, d), 10});
  pair.insert({1, e1, Matrix::Identity(d, d), 10});
  const LinearClassifier clf = refine(expand(LinearClassifier(d), kTwo), pair, RefineConfig{});
  const FeatureMatrix fresh = concat_rows(sample(pair.at(0), 2000, 5), sample(pair.at(1), 2000, 6));
  CHECK(evaluate(clf, fresh) >= 0.99);

  GaussianBank partial;
  partial.insert(pair.at(0));
  try {
    refine(expand(LinearClassifier(d), kTwo), partial, RefineConfig{});
    FAIL("missing class accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Coverage);
  }
}

TEST_CASE("refinement matches direct training on a ten-class bank") {
  const Eigen::Index d = 16;
  std::mt19937_64 rng(66);
  GaussianBank bank;
  std::vector<std::int32_t> ids;
  for (std::int32_t c = 0; c < 10; ++c) {
    Vector mu = oracle::random_matrix(d, 1, rng).col(0);
    mu *= 0.8 / mu.norm();
    bank.insert({c, mu, 0.01 * oracle::random_spd(d, rng), 100});
    ids.push_back(c);
  }
  FeatureMatrix train = FeatureMatrix::empty(d), test = FeatureMatrix::empty(d);
  for (auto c : ids) {
    train = concat_rows(train, sample(bank.at(c), 10 * d, 100 + static_cast<std::uint64_t>(c)));
    test = concat_rows(test, sample(bank.at(c), 300, 200 + static_cast<std::uint64_t>(c)));
  }
  const LinearClassifier zero = expand(LinearClassifier(d), ids);
  const LinearClassifier direct = train_ce(zero, train, ids, CeConfig{.steps = 3000, .batch_size = 128, .lr_start = 32.0, .lr_end = 3.2});
  const LinearClassifier refined = refine(zero, bank, RefineConfig{});
  const double a_direct = evaluate(direct, test), a_refined = evaluate(refined, test);
  CAPTURE(a_direct);
  CAPTURE(a_refined);
  CHECK(std::abs(a_refined - a_direct) <= 0.02);
}

TEST_CASE("refinement with true statistics repairs task-recency bias") {
  SimConfig sim = sim_preset("none");
  sim.tasks = 5;
  sim.seed = 3;
  const SimStream s = gen_stream(sim);
  const Eigen::Index d = s.dim();
  LinearClassifier clf(d);
  for (const TaskRecord& rec : s.tasks) {
    clf = expand(clf, rec.new_classes);
    clf = train_ce(clf, rec.train_curr, rec.new_classes, CeConfig{});
  }
  GaussianBank bank;
  const FeatureMatrix train = l2_normalize(s.final_train);
  for (auto c : clf.class_ids) bank.insert(estimate_gaussian(train, c));
  const FeatureMatrix& test = s.tasks.back().test;
  const double before = evaluate(clf, test);
  const double after = evaluate(refine(clf, bank, RefineConfig{}), test);
  CAPTURE(before);
  CHECK(after >= before);
}

TEST_CASE("evaluate tie-breaking, empty sets and rescaling") {
  log::set_quiet(true);
  const std::vector<std::int32_t> ids{4, 1, 8, 6};
  const LinearClassifier zero = expand(LinearClassifier(2), ids);
  std::vector<std::int32_t> labels;
  for (int i = 0; i < 20; ++i) labels.push_back(ids[static_cast<std::size_t>(i % 4)]);
  const FeatureMatrix data(Matrix::Ones(20, 2), labels);
  CHECK(evaluate(zero, data) == 0.25);  // always predicts 1
  for (auto p : predict(zero, data.values())) CHECK(p == 1);
  CHECK(evaluate(zero, FeatureMatrix::empty(2)) == 0.0);

  std::mt19937_64 rng(67);
  LinearClassifier clf = random_classifier(5, 6, rng);
  const Matrix x = oracle::random_matrix(300, 6, rng);
  LinearClassifier scaled = clf;
  scaled.weight *= 3.7;
  scaled.bias *= 3.7;
  CHECK(predict(scaled, x) == predict(clf, x));

  const FeatureMatrix perfect(x, predict(clf, x));
  CHECK(evaluate(clf, perfect) == 1.0);
  CHECK_THROWS_AS(predict(clf, Matrix::Ones(2, 5)), Error);
}

TEST_CASE("classifier file round trip") {
  std::mt19937_64 rng(68);
  const LinearClassifier clf = random_classifier(3, 5, rng);
  const auto path = std::filesystem::temp_directory_path() / "sldc_clf.lclf";
  write_classifier(clf, path);
  const LinearClassifier back = load_classifier(path);
  CHECK(back.class_ids == clf.class_ids);
  CHECK(back.weight == clf.weight);
  CHECK(back.bias == clf.bias);
  CHECK(std::filesystem::file_size(path) == 12 + 4 * 3 + 8 * 3 + 8 * 15);
  std::filesystem::resize_file(path, 30);
  CHECK_THROWS_AS(load_classifier(path), Error);
}
