#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "origami/json_io.hpp"
#include "origami/rng.hpp"

namespace origami::fixtures {

// Two movie records exercising nesting, variable-length arrays, optional keys
// and a type-polymorphic key (awards.wins holds an integer or a string).
inline std::vector<Json> movies_corpus() {
  std::vector<Json> out;
  out.push_back(Json::parse(
      R"({"title": "Flash Gordon", "genres": ["Action", "Adventure", "Sci-Fi"], "awards": {"wins": 3, "nominations": 8}})"));
  out.push_back(Json::parse(
      R"({"title": "Tron", "genres": ["Action", "Sci-Fi"], "awards": {"wins": "unknown"}})"));
  return out;
}

// Nested boolean dataset whose eight leaf paths share all key names; only the
// path distinguishes them. Bernoulli parameters span 0.05..0.95.
inline std::array<double, 8> pathological_params() {
  std::array<double, 8> ps{};
  for (int i = 0; i < 8; ++i) ps[i] = 0.05 + (0.95 - 0.05) * i / 7.0;
  return ps;
}

inline std::vector<Json> pathological_corpus(std::size_t n, std::uint64_t seed) {
  const std::array<double, 8> ps = pathological_params();
  const char* branches[4] = {"a", "b", "c", "d"};
  const char* sides[2] = {"left", "right"};
  std::vector<Json> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_rng({seed, 0x8aaULL, i});
    Json rec = Json::object();
    int p = 0;
    for (const char* b : branches) {
      Json node = Json::object();
      for (const char* s : sides) {
        node[s] = Json{{"val", uniform_double(rng) < ps[p]}};
        ++p;
      }
      rec[b] = std::move(node);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// Census-style tabular corpus: 15 columns, mixed numeric/categorical, with a
// correlated binary income target. Stands in for UCI Adult in offline runs.
namespace detail {

inline int pick_weighted(Rng& rng, const std::vector<double>& w) {
  double total = 0;
  for (double x : w) total += x;
  double r = uniform_double(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (r < w[i]) return static_cast<int>(i);
    r -= w[i];
  }
  return static_cast<int>(w.size()) - 1;
}

}  // namespace detail

inline std::vector<Json> adultlike_corpus(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> kWorkclass = {
      "Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov",
      "Local-gov", "State-gov", "Without-pay", "Never-worked"};
  static const std::vector<double> kWorkclassW = {0.70, 0.08, 0.04, 0.03,
                                                  0.06, 0.04, 0.03, 0.02};
  static const std::vector<std::string> kEducation = {
      "Preschool", "1st-4th", "5th-6th", "7th-8th", "9th", "10th", "11th",
      "12th", "HS-grad", "Some-college", "Assoc-voc", "Assoc-acdm",
      "Bachelors", "Masters", "Prof-school", "Doctorate"};
  static const std::vector<double> kEducationW = {
      0.01, 0.01, 0.02, 0.02, 0.02, 0.03, 0.04, 0.02,
      0.32, 0.22, 0.04, 0.03, 0.16, 0.04, 0.01, 0.01};
  static const std::vector<std::string> kMarital = {
      "Never-married", "Married-civ-spouse", "Divorced", "Separated",
      "Widowed", "Married-spouse-absent", "Married-AF-spouse"};
  static const std::vector<std::string> kOccupation = {
      "Tech-support", "Craft-repair", "Other-service", "Sales",
      "Exec-managerial", "Prof-specialty", "Handlers-cleaners",
      "Machine-op-inspct", "Adm-clerical", "Farming-fishing",
      "Transport-moving", "Priv-house-serv", "Protective-serv",
      "Armed-Forces"};
  static const std::vector<std::string> kRelationship = {
      "Wife", "Own-child", "Husband", "Not-in-family", "Other-relative",
      "Unmarried"};
  static const std::vector<std::string> kRace = {
      "White", "Black", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other"};
  static const std::vector<double> kRaceW = {0.85, 0.09, 0.03, 0.01, 0.02};
  static const std::vector<std::string> kCountry = {
      "United-States", "Mexico", "Philippines", "Germany", "Canada",
      "Puerto-Rico", "El-Salvador", "India", "Cuba", "England", "China",
      "Jamaica", "South", "Italy", "Dominican-Republic", "Vietnam",
      "Guatemala", "Japan", "Poland", "Columbia"};

  std::vector<Json> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_rng({seed, 0xad17ULL, i});

    int age = 17 + static_cast<int>(std::min(
                       73.0, std::floor(-std::log(1.0 - uniform_double(rng)) *
                                        16.0)));
    int edu = detail::pick_weighted(rng, kEducationW);
    int edu_num = edu + 1;
    bool male = uniform_double(rng) < 0.67;

    int marital;
    if (age < 25) {
      marital = uniform_double(rng) < 0.85 ? 0 : 1;
    } else {
      double r = uniform_double(rng);
      marital = r < 0.50 ? 1 : (r < 0.70 ? 0 : (r < 0.85 ? 2 : detail::pick_weighted(
                                     rng, {0.0, 0.0, 0.0, 0.4, 0.3, 0.2, 0.1})));
    }
    bool married = marital == 1 || marital == 6;

    int occupation;
    if (edu >= 12) {
      occupation = detail::pick_weighted(
          rng, {0.08, 0.03, 0.03, 0.12, 0.25, 0.35, 0.01, 0.01, 0.06, 0.01,
                0.01, 0.0, 0.03, 0.01});
    } else {
      occupation = detail::pick_weighted(
          rng, {0.03, 0.18, 0.15, 0.11, 0.06, 0.04, 0.07, 0.09, 0.13, 0.04,
                0.07, 0.01, 0.02, 0.0});
    }

    int relationship;
    if (married) {
      relationship = male ? 2 : 0;
    } else if (age < 25) {
      relationship = uniform_double(rng) < 0.7 ? 1 : 3;
    } else {
      relationship = detail::pick_weighted(rng, {0, 0.1, 0, 0.5, 0.1, 0.3});
    }

    int hours;
    {
      double base = 40.0 + normal_double(rng) * 10.0;
      if (edu >= 12) base += 4.0;
      hours = std::max(1, std::min(99, static_cast<int>(std::lround(base))));
    }
    std::int64_t fnlwgt =
        static_cast<std::int64_t>(std::lround(std::exp(11.6 + 0.55 * normal_double(rng))));

    std::int64_t capital_gain = 0;
    if (uniform_double(rng) < 0.08) {
      capital_gain = static_cast<std::int64_t>(
          std::lround(std::exp(8.3 + 1.0 * normal_double(rng))));
      capital_gain = std::min<std::int64_t>(capital_gain, 99999);
    }
    std::int64_t capital_loss = 0;
    if (uniform_double(rng) < 0.05) {
      capital_loss = static_cast<std::int64_t>(
          std::lround(std::exp(7.5 + 0.35 * normal_double(rng))));
      capital_loss = std::min<std::int64_t>(capital_loss, 4356);
    }

    double logit = -12.8 + 0.6 * edu_num + 0.07 * age + 0.05 * hours +
                   0.0004 * static_cast<double>(capital_gain) +
                   0.7 * (male ? 1 : 0) + 2.0 * (married ? 1 : 0);
    bool high_income = uniform_double(rng) < 1.0 / (1.0 + std::exp(-logit));

    Json rec = Json::object();
    rec["age"] = age;
    rec["workclass"] = kWorkclass[detail::pick_weighted(rng, kWorkclassW)];
    rec["fnlwgt"] = fnlwgt;
    rec["education"] = kEducation[edu];
    rec["education-num"] = edu_num;
    rec["marital-status"] = kMarital[marital];
    rec["occupation"] = kOccupation[occupation];
    rec["relationship"] = kRelationship[relationship];
    rec["race"] = kRace[detail::pick_weighted(rng, kRaceW)];
    rec["sex"] = male ? "Male" : "Female";
    rec["capital-gain"] = capital_gain;
    rec["capital-loss"] = capital_loss;
    rec["hours-per-week"] = hours;
    rec["native-country"] =
        kCountry[uniform_double(rng) < 0.9
                     ? 0
                     : 1 + static_cast<int>(uniform_index(
                               rng, kCountry.size() - 1))];
    rec["income"] = high_income ? ">50K" : "<=50K";
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace origami::fixtures
