#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace lamp::econ {

/// Raised when a tax, utility or production input leaves its domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Progressivity parameters are singular at 1; actions are clamped this far below it.
inline constexpr double kProgressivityMargin = 1e-3;
inline constexpr double kMinConsumption = 1e-8;

struct ScenarioConfig {
    std::string name = "s1";
    double depreciation_rate = 0.06;
    double consumption_tax_rate = 0.065;
    double interest_rate = 0.04;
    double gini_weight = 1.0;
    int n_households = 10;
    int max_years = 300;
    double eta = 2.0;
    double gamma_frisch = 1.0;
    bool log_utility = false;
    double capital_share = 0.36;
    double h_max = 1.0;
    double asset_log_mean = 0.0;
    double asset_log_sd = 0.5;
    double efficiency_log_mean = 0.0;
    double efficiency_log_sd = 0.5;
    // Fixed government policy used when the government is not learning.
    double gov_tau = 0.2;
    double gov_xi = 0.1;
    double gov_tau_a = 0.02;
    double gov_xi_a = 0.05;
    double gov_spend_ratio = 0.1;

    /// Throws DomainError when any invariant is violated.
    void validate() const;
};

void to_json(nlohmann::json& j, const ScenarioConfig& c);
/// Strict: unknown keys are rejected, missing keys keep their defaults.
void from_json(const nlohmann::json& j, ScenarioConfig& c);

ScenarioConfig load_scenario(const std::filesystem::path& path);
/// Resolves "s1"/"s2"/"s3" to the bundled presets, anything else is treated as a path.
ScenarioConfig resolve_scenario(const std::string& name_or_path);
/// Presets compiled into the library; the bundled JSON files carry the same values.
ScenarioConfig builtin_scenario(const std::string& name);

struct GlobalObs {
    double wage = 0.0;
    double rich_assets = 0.0;
    double poor_assets = 0.0;
    double rich_income = 0.0;
    double poor_income = 0.0;
    double rich_efficiency = 0.0;
    double poor_efficiency = 0.0;

    static constexpr std::size_t kDim = 7;
    std::vector<double> to_vector() const;
};

struct GovAction {
    double tau = 0.2;
    double xi = 0.1;
    double tau_a = 0.02;
    double xi_a = 0.05;
    double spend_ratio = 0.1;

    void validate() const;
};

struct HouseholdAction {
    double savings_rate = 0.5;
    double labor = 0.5;

    /// Affine map from raw policy outputs in [-1, 1].
    static HouseholdAction from_raw(double raw_savings, double raw_labor, double h_max);
};

struct MacroIndicators {
    double wealth_gini = 0.0;
    double social_welfare = 0.0;
    double gdp_per_capita = 0.0;

    std::vector<double> to_vector() const { return {wealth_gini, social_welfare, gdp_per_capita}; }
};

struct EconomyState {
    int t = 0;
    std::vector<double> assets;
    std::vector<double> efficiency;
    std::vector<double> income;  // last realized income, used for group means
    double wage = 0.0;
    double gdp = 0.0;
    double debt = 0.0;
    double cumulative_welfare = 0.0;
    GlobalObs last_global_obs;
};

enum class DoneReason { None, Truncation, Collapse };
std::string to_string(DoneReason r);

struct HouseholdStep {
    double income = 0.0;
    double income_tax = 0.0;
    double asset_tax = 0.0;
    double disposable = 0.0;
    double consumption = 0.0;
    double savings = 0.0;      // p * z, the budget-side asset choice
    double next_assets = 0.0;  // savings after depreciation
    double labor = 0.0;
    double reward = 0.0;
};

struct StepResult {
    EconomyState next;
    std::vector<double> rewards;
    std::vector<HouseholdStep> households;
    double gov_reward = 0.0;
    double tax_revenue = 0.0;
    double spending = 0.0;
    bool done = false;
    DoneReason reason = DoneReason::None;
    MacroIndicators indicators;
};

double income_tax(double income, double tau, double xi);
double asset_tax(double assets, double tau_a, double xi_a);

struct Production {
    double output = 0.0;
    double wage = 0.0;
};
Production produce(const std::vector<double>& assets, const std::vector<double>& efficiency,
                   const std::vector<double>& hours, double capital_share, double previous_wage);

inline double household_income(double wage, double efficiency, double hours, double interest_rate,
                               double assets) {
    return wage * efficiency * hours + interest_rate * assets;
}

/// CRRA consumption utility minus isoelastic labor disutility.
double utility(double consumption, double hours, double eta, double gamma_frisch, bool log_utility = false);

double wealth_gini(const std::vector<double>& assets);

GlobalObs global_obs(const std::vector<double>& assets, const std::vector<double>& income,
                     const std::vector<double>& efficiency, double wage);

MacroIndicators macro_indicators(const EconomyState& state, double rewards_so_far);

/// (gdp_prev, gdp_now, gini, gini_weight) -> government reward.
using GovRewardFn = std::function<double(double, double, double, double)>;
double gdp_growth_minus_gini(double gdp_prev, double gdp_now, double gini, double gini_weight);

class Economy {
public:
    explicit Economy(ScenarioConfig config, GovRewardFn gov_reward = gdp_growth_minus_gini);

    const ScenarioConfig& config() const { return config_; }
    const EconomyState& state() const { return state_; }

    const EconomyState& reset(std::uint64_t seed);
    StepResult step(const GovAction& gov, const std::vector<HouseholdAction>& households);

private:
    ScenarioConfig config_;
    GovRewardFn gov_reward_;
    EconomyState state_;
};

}  // namespace lamp::econ
