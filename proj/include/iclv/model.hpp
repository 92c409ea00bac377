#pragma once

// Domain types and probability kernels of the integrated choice and latent
// variable model: structural latent means, latent draws, ordered-logit
// indicator probabilities, systematic utilities with latent interactions and
// multinomial-logit choice probabilities.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iclv {

// ---------------------------------------------------------------------------
// Socio-demographics

enum class Education : std::uint8_t { other, certificate, postgraduate, undergraduate };
enum class Employment : std::uint8_t { other, full_time, part_time };
enum class Household : std::uint8_t { other, couple_kids, couple_no_kids, single_parent, single };
enum class Vehicles : std::uint8_t { none, one, two, three_plus };
enum class Income : std::uint8_t { middle, low, high };
enum class Dwelling : std::uint8_t { other, house, apartment };
enum class Tenure : std::uint8_t { other, owner, owner_mortgage, renter };

/// Observed covariates of one respondent. Dummy groups are stored as
/// categories so that at most one dummy per group can be active; the
/// reference category of each group is its first enumerator.
struct CovariateVector {
  double age = 0.0;  ///< years / 100
  bool female = false;
  Education education = Education::other;
  Employment employment = Employment::other;
  Household household = Household::other;
  Vehicles vehicles = Vehicles::none;
  Income income = Income::middle;
  Dwelling dwelling = Dwelling::other;
  Tenure tenure = Tenure::other;

  double age_sq() const { return age * age; }
  double age_cu() const { return age * age * age; }

  friend bool operator==(const CovariateVector&, const CovariateVector&) = default;
};

inline constexpr std::string_view kConstant = "constant";

/// All structural covariate names (excluding the constant), in table order.
std::span<const std::string_view> covariate_names();

/// Value of a named covariate ("constant" gives 1). Throws ConfigError for
/// unknown names.
double covariate_value(const CovariateVector& z, std::string_view name);

/// Checks age ∈ (0, 1.2]. Throws ParameterError.
void validate(const CovariateVector& z);

// ---------------------------------------------------------------------------
// Alternatives

enum class BodyType : std::uint8_t { hatchback, small_sedan, large_sedan, small_suv, large_suv, minivan };

inline constexpr std::array<std::string_view, 6> kBodyTypeNames = {
    "hatchback", "small_sedan", "large_sedan", "small_suv", "large_suv", "minivan"};

/// Attributes of one EV alternative, in model units:
///   price $/100k, setup_cost $/1k, operating_cost c/km, recharge_time h/10,
///   range_km km/100, rebate_upfront $/10k, energy_discount and
///   market_uptake as fractions, charge_spacing km/10, parking_rebate $/100,
///   stamp_duty as a fraction.
struct AlternativeAttributes {
  BodyType body_type = BodyType::minivan;
  double price = 0.0;
  double setup_cost = 0.0;
  double operating_cost = 0.0;
  double recharge_time = 0.0;
  double range_km = 0.0;
  double rebate_upfront = 0.0;
  double energy_discount = 0.0;
  double market_uptake = 0.0;
  // Carried for dataset fidelity; not in the estimated utility by default.
  double charge_spacing = 0.0;
  bool bus_lane = false;
  double parking_rebate = 0.0;
  double stamp_duty = 0.0;

  friend bool operator==(const AlternativeAttributes&, const AlternativeAttributes&) = default;
};

/// Every attribute key understood by attribute_value(): the six body-type
/// dummies followed by the numeric attributes.
std::span<const std::string_view> attribute_names();

/// Value of a named attribute. Body types are 0/1 dummies. Throws ConfigError
/// for unknown keys.
double attribute_value(const AlternativeAttributes& alt, std::string_view key);

bool is_attribute_name(std::string_view key);

/// Throws ParameterError if a magnitude is negative or a fraction leaves [0,1].
void validate(const AlternativeAttributes& alt);

std::string_view to_string(BodyType b);
BodyType parse_body_type(std::string_view s);

// ---------------------------------------------------------------------------
// Latents

enum class Latent : std::uint8_t { design = 0, environment = 1, safety = 2 };
inline constexpr std::size_t kLatentCount = 3;
inline constexpr std::array<std::string_view, kLatentCount> kLatentNames = {"design", "environment",
                                                                           "safety"};

std::string_view to_string(Latent l);
Latent parse_latent(std::string_view s);

struct LatentAttitudes {
  std::array<double, kLatentCount> values{};

  double operator[](Latent l) const { return values[static_cast<std::size_t>(l)]; }
  double& operator[](Latent l) { return values[static_cast<std::size_t>(l)]; }
  double design() const { return values[0]; }
  double environment() const { return values[1]; }
  double safety() const { return values[2]; }
};

using StandardDraw = std::array<double, kLatentCount>;

// ---------------------------------------------------------------------------
// Parameters

inline constexpr int kLikertLevels = 5;
inline constexpr int kThresholdCount = kLikertLevels - 1;

struct IndicatorParams {
  std::string name;
  Latent latent = Latent::design;
  double loading = 1.0;
  std::array<double, kThresholdCount> thresholds{};
};

struct MeasurementParams {
  std::vector<IndicatorParams> indicators;
};

/// Throws ParameterError unless every indicator has strictly increasing,
/// finite thresholds and a finite loading.
void validate(const MeasurementParams& m);

/// Structural matrix A stored column-wise: one 3-vector of coefficients per
/// covariate. Column names use covariate_names() plus "constant".
struct StructuralCoefficients {
  std::vector<std::string> covariates;
  std::vector<std::array<double, kLatentCount>> columns;

  std::size_t size() const { return covariates.size(); }
  /// Index of a column or -1.
  int find(std::string_view covariate) const;
};

struct Coefficient {
  std::string attribute;
  double value = 0.0;
};

struct Interaction {
  Latent latent = Latent::design;
  std::string attribute;
  double coefficient = 0.0;
};

struct ParameterSet {
  StructuralCoefficients structural;
  /// Standard deviations of the latent disturbances. Absent when a parameter
  /// file only carries the deterministic part (the published tables do).
  std::optional<std::array<double, kLatentCount>> delta_scale;
  std::optional<MeasurementParams> measurement;
  std::vector<Coefficient> beta;
  std::vector<Interaction> interactions;
  /// Constant added to both EV alternatives; the opt-out stays at zero.
  double asc = 0.0;

  /// Coefficient for an attribute or nullopt.
  std::optional<double> find_beta(std::string_view attribute) const;
};

/// Checks every invariant of a ParameterSet. Throws ParameterError or
/// ConfigError.
void validate(const ParameterSet& p);

/// The default interaction pairs: design×price, environment×range,
/// safety×large SUV, safety×large sedan.
std::vector<Interaction> default_interactions();

// ---------------------------------------------------------------------------
// Data

enum class Choice : std::uint8_t { alt1 = 0, alt2 = 1, opt_out = 2 };

struct ChoiceTask {
  AlternativeAttributes alt1;
  AlternativeAttributes alt2;
  Choice chosen = Choice::opt_out;

  friend bool operator==(const ChoiceTask&, const ChoiceTask&) = default;
};

inline constexpr int kMissingResponse = 0;

struct Individual {
  std::int64_t id = 0;
  CovariateVector covariates;
  /// Likert responses 1..5, kMissingResponse when not answered.
  std::vector<int> indicators;
  std::vector<ChoiceTask> tasks;

  friend bool operator==(const Individual&, const Individual&) = default;
};

struct ChoiceDataset {
  int panel_length = 8;
  int indicator_count = 10;
  std::vector<Individual> individuals;

  friend bool operator==(const ChoiceDataset&, const ChoiceDataset&) = default;
};

/// Checks panel length, response ranges, covariate and attribute invariants and
/// id uniqueness. Throws ParameterError naming the offending individual.
void validate(const ChoiceDataset& data);

// ---------------------------------------------------------------------------
// Model specification

struct IndicatorSpec {
  std::string name;
  Latent latent = Latent::design;
  bool anchor = false;  ///< loading fixed to 1 (and location when anchored)
};

struct InteractionSpec {
  Latent latent = Latent::design;
  std::string attribute;
};

struct ModelSpec {
  /// Structural covariates (the constant is always included).
  std::vector<std::string> covariates;
  std::vector<IndicatorSpec> indicators;
  /// Attributes with a free utility coefficient.
  std::vector<std::string> attributes;
  std::vector<InteractionSpec> interactions;
  /// First threshold of each anchor indicator is fixed to this value, which
  /// pins the latent location. nullopt leaves every threshold free.
  std::optional<double> anchor_threshold = 1.5;
  bool free_asc = false;
  /// Free-parameter names held at their starting values.
  std::vector<std::string> fixed;

  /// Full structural covariate list, ten indicators (1-2 safety, 3-4
  /// environment, 5-10 design) and the published utility terms.
  static ModelSpec paper_default();

  /// Structural column names with "constant" first.
  std::vector<std::string> structural_columns() const;
  bool is_fixed(std::string_view parameter) const;
};

/// Resolves names and checks anchor counts. Identification of latents is
/// checked by free_parameter_map(). Throws ConfigError.
void validate(const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Kernels

/// Standard logistic CDF, evaluated without overflow.
double logistic(double x);

/// A·z at δ = 0 for the named columns of params.structural.
LatentAttitudes structural_mean(const ParameterSet& params, const CovariateVector& z);

/// A·z for a dense covariate vector aligned with params.structural.columns.
/// Throws ConfigError naming the first unmatched covariate on size mismatch.
LatentAttitudes structural_mean(const ParameterSet& params, std::span<const double> z);

/// mean + delta_scale ⊙ draw for every draw.
std::vector<LatentAttitudes> draw_latents(const ParameterSet& params, const CovariateVector& z,
                                          std::span<const StandardDraw> draws);

/// Ordered-logit probability of a Likert level (1..5) given the linear index
/// loading·latent.
double ordered_logit_prob(std::span<const double, kThresholdCount> thresholds, double index, int level);

/// log of ordered_logit_prob, stable far into the tails.
double ordered_logit_log_prob(std::span<const double, kThresholdCount> thresholds, double index,
                              int level);

/// Probability that indicator k (0-based) takes `level` given latents.
double indicator_prob(const MeasurementParams& meas, std::size_t k, const LatentAttitudes& att,
                      int level);

struct OptOut {};

double systematic_utility(const ParameterSet& params, const AlternativeAttributes& alt,
                          const LatentAttitudes& att);
inline double systematic_utility(const ParameterSet&, OptOut, const LatentAttitudes&) { return 0.0; }

/// Softmax over available alternatives with max-subtraction.
std::array<double, 3> choice_prob(std::span<const double, 3> utilities,
                                  std::span<const bool, 3> available);
std::array<double, 3> choice_prob(std::span<const double, 3> utilities);

}  // namespace iclv
