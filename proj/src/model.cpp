#include "deconf/model.hpp"

#include "deconf/math.hpp"

#include <cmath>

namespace deconf {
namespace {

void softmax_rows(const Matrix& logits, Matrix& log_probs, Matrix& probs) {
  log_probs.resize(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) log_probs.row(r) = log_softmax(logits.row(r)).transpose();
  probs = exp_exact(log_probs);
}

nlohmann::json rows_json(const Matrix& m, Index begin, Index count) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = begin; r < begin + count; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::kValidation, what);
}

}  // namespace

LogitTensors LogitTensors::zeros(int K, int S, int A) {
  LogitTensors t;
  t.prior = Vector::Zero(K);
  t.dynamics = Matrix::Zero(static_cast<Index>(K) * S * A, S);
  t.policy = Matrix::Zero(static_cast<Index>(K) * S, A);
  return t;
}

LogitTensors& LogitTensors::operator+=(const LogitTensors& other) {
  prior += other.prior;
  dynamics += other.dynamics;
  policy += other.policy;
  return *this;
}

bool LogitTensors::all_finite() const {
  return prior.allFinite() && dynamics.allFinite() && policy.allFinite();
}

CategoricalLatentModel CategoricalLatentModel::random(int K, int S, int A, Rng& rng, double scale) {
  if (K < 1 || S < 1 || A < 1) throw Error(ErrorKind::kValidation, "model dimensions must be positive");
  CategoricalLatentModel m{K, S, A, LogitTensors::zeros(K, S, A)};
  auto fill = [&](auto& x) {
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-scale, scale);
  };
  fill(m.logits.prior);
  fill(m.logits.dynamics);
  fill(m.logits.policy);
  return m;
}

CategoricalLatentModel CategoricalLatentModel::from_tables(const ConfoundedMdp& tables) {
  const auto& f = tables.family;
  CategoricalLatentModel m{f.num_latents, f.num_states, f.num_actions, {}};
  m.logits.prior = f.latent_prior.array().log().matrix();
  m.logits.dynamics = f.transitions.array().log().matrix();
  m.logits.policy = tables.expert.policy.array().log().matrix();
  if (!m.logits.all_finite()) throw Error(ErrorKind::kValidation, "from_tables: tables must be strictly positive");
  return m;
}

ConfoundedMdp CategoricalLatentModel::to_tables(const Matrix& initial_dist) const {
  const ModelLogTables t(*this);
  ConfoundedMdp mdp{MdpFamilySpec::zeros(num_latents, num_states, num_actions),
                    ExpertSpec::zeros(num_latents, num_states, num_actions)};
  mdp.family.latent_prior = t.prior;
  mdp.family.transitions = t.dynamics;
  mdp.expert.policy = t.policy;
  if (initial_dist.rows() == 1 && initial_dist.cols() == num_states) {
    mdp.family.initial_dist = initial_dist.replicate(num_latents, 1);
  } else if (initial_dist.rows() == num_latents && initial_dist.cols() == num_states) {
    mdp.family.initial_dist = initial_dist;
  } else {
    throw Error(ErrorKind::kValidation, "to_tables: initial distribution has the wrong shape");
  }
  return mdp;
}

ModelLogTables::ModelLogTables(const CategoricalLatentModel& model)
    : num_latents(model.num_latents), num_states(model.num_states), num_actions(model.num_actions) {
  log_prior = log_softmax(model.logits.prior);
  prior = exp_exact(log_prior);
  softmax_rows(model.logits.dynamics, log_dynamics, dynamics);
  softmax_rows(model.logits.policy, log_policy, policy);
}

void log_prob_grad_to_logit_grad(const ModelLogTables& tables, LogitTensors& grad) {
  grad.prior -= tables.prior * grad.prior.sum();
  for (Index r = 0; r < grad.dynamics.rows(); ++r) {
    const double total = grad.dynamics.row(r).sum();
    if (total != 0.0) grad.dynamics.row(r) -= total * tables.dynamics.row(r);
  }
  for (Index r = 0; r < grad.policy.rows(); ++r) {
    const double total = grad.policy.row(r).sum();
    if (total != 0.0) grad.policy.row(r) -= total * tables.policy.row(r);
  }
}

AgentFactory ImitatorPolicy::factory(ActorStyle style) const { return make_belief_factory(tables, mode, style); }

HistoryPolicy ImitatorPolicy::history_policy() const {
  return [tables = tables, mode = mode](const Trajectory& prefix) { return act_exact(*tables, prefix, mode); };
}

nlohmann::json logits_to_json(const CategoricalLatentModel& m) {
  nlohmann::json dyn = nlohmann::json::array();
  nlohmann::json pol = nlohmann::json::array();
  for (LatentId z = 0; z < m.num_latents; ++z) {
    nlohmann::json per_state = nlohmann::json::array();
    for (StateId s = 0; s < m.num_states; ++s)
      per_state.push_back(rows_json(m.logits.dynamics, m.dynamics_row(z, s, 0), m.num_actions));
    dyn.push_back(std::move(per_state));
    pol.push_back(rows_json(m.logits.policy, m.policy_row(z, 0), m.num_states));
  }
  nlohmann::json j;
  j["num_latents"] = m.num_latents;
  j["num_states"] = m.num_states;
  j["num_actions"] = m.num_actions;
  j["prior_logits"] = std::vector<double>(m.logits.prior.data(), m.logits.prior.data() + m.logits.prior.size());
  j["dynamics_logits"] = std::move(dyn);
  j["policy_logits"] = std::move(pol);
  return j;
}

CategoricalLatentModel logits_from_json(const nlohmann::json& j) {
  try {
    const int K = j.at("num_latents").get<int>();
    const int S = j.at("num_states").get<int>();
    const int A = j.at("num_actions").get<int>();
    require(K > 0 && S > 0 && A > 0, "checkpoint: dimensions must be positive");
    CategoricalLatentModel m{K, S, A, LogitTensors::zeros(K, S, A)};
    const auto prior = j.at("prior_logits").get<std::vector<double>>();
    require(static_cast<int>(prior.size()) == K, "checkpoint: prior_logits has wrong length");
    for (int z = 0; z < K; ++z) m.logits.prior(z) = prior[static_cast<std::size_t>(z)];
    const auto& dyn = j.at("dynamics_logits");
    const auto& pol = j.at("policy_logits");
    require(dyn.size() == static_cast<std::size_t>(K) && pol.size() == static_cast<std::size_t>(K),
            "checkpoint: logit tensors have wrong latent dimension");
    for (LatentId z = 0; z < K; ++z) {
      require(dyn[z].size() == static_cast<std::size_t>(S) && pol[z].size() == static_cast<std::size_t>(S),
              "checkpoint: logit tensors have wrong state dimension");
      for (StateId s = 0; s < S; ++s) {
        const auto prow = pol[z][s].get<std::vector<double>>();
        require(static_cast<int>(prow.size()) == A, "checkpoint: policy row has wrong length");
        for (ActionId a = 0; a < A; ++a) {
          m.logits.policy(m.policy_row(z, s), a) = prow[static_cast<std::size_t>(a)];
          const auto drow = dyn[z][s][a].get<std::vector<double>>();
          require(static_cast<int>(drow.size()) == S, "checkpoint: dynamics row has wrong length");
          for (StateId n = 0; n < S; ++n) m.logits.dynamics(m.dynamics_row(z, s, a), n) = drow[static_cast<std::size_t>(n)];
        }
      }
    }
    require(m.logits.all_finite(), "checkpoint: logits must be finite");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace deconf
