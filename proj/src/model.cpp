#include "hmws/model.hpp"

#include <charconv>

#include "hmws/error.hpp"

namespace hmws {

Var HybridModel::log_prior_discrete(Tape& tape, const Discrete& z_d) const {
  tape.counters().discrete_prior_evals += 1;
  Discrete z = z_d;
  return prior_discrete(tape, z, nullptr);
}

Discrete HybridModel::sample_prior_discrete(Tape& tape, Rng& rng) const {
  Discrete z;
  prior_discrete(tape, z, &rng);
  return z;
}

GaussianVar HybridModel::prior_continuous_cached(Tape& tape, const Discrete& z_d) const {
  const auto& cached = tape.memo("prior_c:" + canonical_key(z_d), [&] {
    const GaussianVar g = prior_continuous(tape, z_d);
    return std::vector<Var>{g.mean, g.log_std};
  });
  return GaussianVar{cached[0], cached[1]};
}

Var HybridModel::log_conditional(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const {
  tape.counters().likelihood_evals += 1;
  const GaussianVar prior = prior_continuous_cached(tape, z_d);
  return ad::add(prior.log_prob(z_c), log_likelihood(tape, z_d, z_c, x));
}

Var HybridModel::log_joint(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const {
  return ad::add(log_prior_discrete(tape, z_d), log_conditional(tape, z_d, z_c, x));
}

JointSample HybridModel::sample_joint(Rng& rng) const {
  Tape tape(&params_);
  JointSample s;
  s.z_d = sample_prior_discrete(tape, rng);
  s.z_c = prior_continuous(tape, s.z_d).detached().sample(rng);
  s.x = sample_observation(s.z_d, s.z_c, rng);
  return s;
}

Var HybridModel::log_q_discrete(Tape& tape, const Observation& x, const Discrete& z_d) const {
  Discrete z = z_d;
  return recognition_discrete(tape, x, z, nullptr);
}

std::pair<Discrete, Var> HybridModel::sample_q_discrete(Tape& tape, const Observation& x, Rng& rng) const {
  Discrete z;
  Var lp = recognition_discrete(tape, x, z, &rng);
  return {std::move(z), lp};
}

GaussianVar HybridModel::q_continuous_cached(Tape& tape, const Discrete& z_d, const Observation& x) const {
  const auto& cached = tape.memo("q_c:" + canonical_key(z_d), [&] {
    const GaussianVar g = recognition_continuous(tape, z_d, x);
    return std::vector<Var>{g.mean, g.log_std};
  });
  return GaussianVar{cached[0], cached[1]};
}

std::string HybridModel::canonical_key(const Discrete& z_d) const {
  std::string key;
  for (std::size_t i = 0; i < z_d.size(); ++i) {
    if (i) key += ',';
    key += std::to_string(z_d[i]);
  }
  return key;
}

Discrete HybridModel::parse_key(std::string_view key) const {
  Discrete out;
  while (!key.empty()) {
    const auto comma = key.find(',');
    const auto part = key.substr(0, comma);
    int v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size()) {
      throw DataError("malformed discrete key '" + std::string(key) + "'");
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    key.remove_prefix(comma + 1);
  }
  return out;
}

std::optional<double> HybridModel::exact_log_joint_discrete(const Discrete&, const Observation&) const {
  return std::nullopt;
}

}  // namespace hmws
