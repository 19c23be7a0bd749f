#pragma once

#include <random>

#include "lamp/econ.hpp"
#include "lamp/nn.hpp"

namespace lamp::policies {

/// Uniform raw action in [-1, 1]^2.
nn::Vector random_policy(std::mt19937_64& rng);

/// Everything the rule household needs to evaluate a candidate action.
struct RuleContext {
    double wage = 0.0;
    double efficiency = 1.0;
    double assets = 0.0;
    econ::ScenarioConfig scenario;
    econ::GovAction gov;
    double beta = 0.975;
};

inline constexpr int kRuleGrid = 21;

/// u(c, h) + beta * u(c', h) where c' consumes all next-period resources at
/// unchanged wage and hours. -inf for infeasible choices.
double rule_objective(const RuleContext& ctx, double raw_savings, double raw_labor);

/// Argmax of rule_objective over a 21 x 21 raw grid; ties keep the first point
/// in row-major (savings, labor) order.
nn::Vector rule_policy(const RuleContext& ctx);

}  // namespace lamp::policies
