#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "breedkit/date.hpp"

namespace breedkit::kb {

struct GermplasmRecord {
    std::string variety_name;
    std::string origin;
    // crude_protein (%), lysine (%), sedimentation_value (mL)
    std::map<std::string, double> quality;
    // stripe_rust, leaf_rust, powdery_mildew, drought, cold -> level label
    std::map<std::string, std::string> resistance;
    // maturity: days when numeric, otherwise a class label
    std::string maturity;
    std::optional<double> plant_height_cm;
    std::optional<double> thousand_grain_weight_g;
    std::string grain_hardness;
};

using FieldValue = std::variant<std::monostate, double, std::string>;

// Value of a named field; monostate when the record has no value.
// Throws UnknownField for names outside the schema.
FieldValue field_value(const GermplasmRecord &record, const std::string &field);
const std::vector<std::string> &germplasm_fields();

std::vector<GermplasmRecord> read_germplasm(std::istream &in, const std::string &source = "<stream>");
std::vector<GermplasmRecord> load_germplasm(const std::filesystem::path &path);

enum class Op { lt, le, gt, ge, eq, ne, in };

struct Criterion {
    std::string field;
    Op op = Op::eq;
    std::vector<std::string> values; // one value, or several for `in`

    // "plant_height<=80", "stripe_rust in HR|R", "origin==Beijing".
    static Criterion parse(const std::string &text);
    bool matches(const GermplasmRecord &record) const;
    std::string str() const;
};

// Records satisfying every criterion, ordered by variety_name.
std::vector<GermplasmRecord> screen_germplasm(const std::vector<GermplasmRecord> &records,
                                              const std::vector<Criterion> &criteria);

// Screening targets of the benchmark: high quality, disease resistance,
// drought resistance, maturity period, mechanized harvest.
enum class Trait { HQ, DS, DR, MP, AM };
std::string to_string(Trait trait);
Trait trait_from_string(const std::string &name);

// Configurable thresholds behind each trait. Defaults are working values,
// not agronomic standards.
struct TraitThresholds {
    double min_crude_protein = 14.0;
    double min_sedimentation = 40.0;
    std::vector<std::string> resistant_levels = {"I", "HR", "R", "MR"};
    std::string disease_field = "stripe_rust";
    double max_maturity_days = 230.0;
    double max_plant_height_cm = 80.0;
};

std::vector<Criterion> trait_criteria(Trait trait, const TraitThresholds &thresholds = {});
bool has_trait(const GermplasmRecord &record, Trait trait, const TraitThresholds &thresholds = {});

struct PriceRecord {
    std::string observation_point;
    std::string variety_name;
    double price = 0.0;         // currency per bag
    double specification = 0.0; // kg per bag
    std::string planting_area;
    Date date;
};

std::vector<PriceRecord> read_prices(std::istream &in, const std::string &source = "<stream>");
std::vector<PriceRecord> load_prices(const std::filesystem::path &path);

inline constexpr long long kPriceDateWindowDays = 31;

// Records at `observation_point` (and `variety`, if given) on the date nearest
// `date` within +/-31 days; ties go to the earlier date. nullopt means the
// knowledge base has no answer.
std::optional<std::vector<PriceRecord>> query_price(const std::vector<PriceRecord> &records,
                                                    const std::string &observation_point, const Date &date,
                                                    const std::optional<std::string> &variety = std::nullopt);

// |answer - price| <= 10% of price, inclusive.
bool price_consistent(double answer_price, const PriceRecord &record);

enum class DocCategory { cultivation, plant_protection };

struct DocRecord {
    std::string doc_id;
    DocCategory category;
    std::string title;
    std::string body;
    std::string source;
};

std::vector<DocRecord> read_docs(std::istream &in, const std::string &source = "<stream>");
std::vector<DocRecord> load_docs(const std::filesystem::path &path);

// Exact substring match on title or body, in input order.
std::vector<DocRecord> search_docs(const std::vector<DocRecord> &docs, const std::string &needle,
                                   std::optional<DocCategory> category = std::nullopt);

} // namespace breedkit::kb
