#include <doctest.h>

#include "rlsta/capability_filter.hpp"
#include "rlsta/errors.hpp"
#include "rlsta/mock_backend.hpp"

using namespace rlsta;

namespace {

// Full-instruction contexts contain FULL, histories contain HIST.
MockBackend two_sided(double p_single, double p_multi) {
  auto table = [](double p) {
    return json::array({{{"completion", "so \\boxed{1}"}, {"weight", p}},
                        {{"completion", "so \\boxed{0}"}, {"weight", 1.0 - p}}});
  };
  json full = {{"contains", "FULL"}, {"outcomes", table(p_single)}};
  json hist = {{"contains", "HIST"}, {"outcomes", table(p_multi)}};
  return MockBackend::from_jsonl(full.dump() + "\n" + hist.dump(), "two-sided");
}

std::vector<Turn> history() {
  return {{Role::system, "sys", std::nullopt},
          {Role::user, "HIST start", std::nullopt},
          {Role::assistant, "guess", std::nullopt},
          {Role::user, "more", std::nullopt}};
}

std::vector<Turn> single() { return {{Role::system, "sys", std::nullopt}, {Role::user, "FULL", std::nullopt}}; }

}  // namespace

TEST_CASE("Monte Carlo accuracy agrees with the exact expectation") {
  auto mock = two_sided(0.75, 0.1);
  const double exact = exact_accuracy(single(), mock, "1", ExtractMode::boxed_then_last_number);
  CHECK(exact == doctest::Approx(0.75).epsilon(1e-12));
  const int n = 10000;
  const double est = estimate_accuracy(single(), mock, n, "1", ExtractMode::boxed_then_last_number,
                                       {1.0, 64, std::nullopt}, 3, "p");
  CHECK(std::abs(est - exact) <= 3 * std::sqrt(0.75 * 0.25 / n));
}

TEST_CASE("degenerate estimates") {
  auto always = MockBackend::from_jsonl(R"({"default": true, "outcomes": [{"completion": "\\boxed{1}"}]})", "a");
  CHECK(estimate_accuracy(single(), always, 8, "1", ExtractMode::boxed_then_last_number, {}, 1, "t") == 1.0);
  CHECK(estimate_accuracy(single(), always, 1, "2", ExtractMode::boxed_then_last_number, {}, 1, "t") == 0.0);
  CHECK_THROWS_AS(estimate_accuracy(single(), always, 0, "1", ExtractMode::boxed_then_last_number, {}, 1, "t"),
                  ValidationError);
}

TEST_CASE("backend failure carries the partial tally") {
  class Dies : public Backend {
   public:
    int calls = 0;
    Turn chat(const std::vector<Turn>&, const SamplingParams&) override {
      if (++calls > 3) throw BackendError("gone", true);
      return {Role::assistant, "\\boxed{1}", std::nullopt};
    }
    ScoredCompletion score(const std::vector<Turn>&, std::string_view) override { return {}; }
    std::string name() const override { return "dies"; }
  } dies;
  try {
    estimate_accuracy(single(), dies, 8, "1", ExtractMode::boxed_then_last_number, {}, 1, "t");
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    const auto tally = json::parse(e.payload());
    CHECK(tally.at("completed") == 3);
    CHECK(tally.at("correct") == 3);
  }
}

TEST_CASE("retention rule") {
  CHECK(retain(0.8, 0.2, 0.125));
  CHECK_FALSE(retain(0.5, 0.5, 0.125));
  CHECK(retain(0.625, 0.5, 0.125));
  // fixed rates: raising the margin never flips to retained
  for (int s = 0; s <= 8; ++s)
    for (int m = 0; m <= 8; ++m) {
      bool was = true;
      for (int d = 0; d <= 8; ++d) {
        const bool now = retain(s / 8.0, m / 8.0, d / 8.0);
        CHECK((!now || was));
        was = now;
      }
    }
}

TEST_CASE("filter verdict on a separated instance matches the exact verdict") {
  auto mock = two_sided(0.9, 0.1);
  FilterOptions opt;
  const auto v = filter_history("p", history(), "FULL", "1", mock, opt, 5);
  CHECK(v.n_samples == 8);
  CHECK(v.margin_used == 0.125);
  const bool exact = retain(exact_accuracy(single(), mock, "1", opt.mode), exact_accuracy(history(), mock, "1", opt.mode),
                            opt.margin());
  CHECK(v.retained == exact);
  CHECK(v.retained);
  CHECK(std::fmod(v.acc_single * 8, 1.0) == 0.0);
  CHECK(json(v).get<FilterVerdict>() == v);
}

TEST_CASE("Monte Carlo verdicts match exact verdicts over seeded trials") {
  const std::vector<std::pair<double, double>> instances = {{0.9, 0.1}, {0.6, 0.35}, {0.3, 0.55}, {0.5, 0.25}};
  for (const auto& [ps, pm] : instances) {
    auto mock = two_sided(ps, pm);
    FilterOptions opt;
    opt.n = 64;
    const bool exact = retain(exact_accuracy(single(), mock, "1", opt.mode),
                              exact_accuracy(history(), mock, "1", opt.mode), opt.margin());
    int agree = 0;
    for (std::uint64_t trial = 0; trial < 1000; ++trial)
      agree += filter_history("p", history(), "FULL", "1", mock, opt, trial).retained == exact;
    CAPTURE(ps);
    CAPTURE(pm);
    CHECK(agree >= 990);
  }
}

TEST_CASE("cap keeps a seeded subset of retained verdicts in input order") {
  std::vector<FilterVerdict> vs(20);
  for (std::size_t i = 0; i < vs.size(); ++i) vs[i].retained = i % 3 != 0;
  const auto kept = cap_retained(vs, 5, 9);
  REQUIRE(kept.size() == 5);
  CHECK(std::is_sorted(kept.begin(), kept.end()));
  for (auto i : kept) CHECK(vs[i].retained);
  CHECK(cap_retained(vs, 5, 9) == kept);
  CHECK(cap_retained(vs, 100, 9).size() == 13);
}
