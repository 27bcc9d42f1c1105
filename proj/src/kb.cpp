#include "breedkit/kb.hpp"

#include "breedkit/csv.hpp"
#include "breedkit/error.hpp"
#include "breedkit/format.hpp"
#include "breedkit/tolerance.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace breedkit::kb {

namespace {

const char *const kQualityFields[] = {"crude_protein", "lysine", "sedimentation_value"};
const char *const kResistanceFields[] = {"stripe_rust", "leaf_rust", "powdery_mildew", "drought", "cold"};

template <typename T>
bool contains(const T &range, const std::string &name) {
    return std::find(std::begin(range), std::end(range), name) != std::end(range);
}

std::ifstream open(const std::filesystem::path &path, const char *what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string("cannot open ") + what + " " + path.string());
    return in;
}

} // namespace

const std::vector<std::string> &germplasm_fields() {
    static const std::vector<std::string> fields = {
        "variety_name", "origin",  "crude_protein", "lysine",       "sedimentation_value",   "stripe_rust",
        "leaf_rust",    "powdery_mildew", "drought", "cold",        "maturity",              "plant_height",
        "thousand_grain_weight", "grain_hardness"};
    return fields;
}

FieldValue field_value(const GermplasmRecord &r, const std::string &field) {
    auto text = [](const std::string &s) -> FieldValue {
        if (s.empty()) return std::monostate{};
        return s;
    };
    auto number = [](const std::optional<double> &v) -> FieldValue {
        if (!v) return std::monostate{};
        return *v;
    };
    if (field == "variety_name") return text(r.variety_name);
    if (field == "origin") return text(r.origin);
    if (field == "grain_hardness") return text(r.grain_hardness);
    if (field == "plant_height") return number(r.plant_height_cm);
    if (field == "thousand_grain_weight") return number(r.thousand_grain_weight_g);
    if (field == "maturity") {
        if (auto days = parse_double(r.maturity)) return *days;
        return text(r.maturity);
    }
    if (contains(kQualityFields, field)) {
        auto it = r.quality.find(field);
        if (it == r.quality.end()) return std::monostate{};
        return it->second;
    }
    if (contains(kResistanceFields, field)) {
        auto it = r.resistance.find(field);
        if (it == r.resistance.end()) return std::monostate{};
        return text(it->second);
    }
    throw UnknownField("unknown germplasm field '" + field + "'");
}

std::vector<GermplasmRecord> read_germplasm(std::istream &in, const std::string &source) {
    auto t = csv::Table::read(in, source);
    std::vector<GermplasmRecord> out;
    std::set<std::string> names;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto where = source + ":" + std::to_string(t.line_of(r));
        GermplasmRecord g;
        g.variety_name = std::string(trim(t.cell(r, "variety_name")));
        if (g.variety_name.empty()) throw ParseError(where + ": empty variety_name");
        if (!names.insert(g.variety_name).second) throw ParseError(where + ": duplicate variety '" + g.variety_name + "'");
        g.origin = t.optional_cell(r, "origin").value_or("");
        auto non_negative = [&](const char *col) {
            auto v = t.number(r, col);
            if (v && *v < 0.0) throw ParseError(where + ": " + col + " must be non-negative");
            return v;
        };
        for (const char *q : kQualityFields)
            if (auto v = non_negative(q)) g.quality[q] = *v;
        for (const char *res : kResistanceFields)
            if (auto v = t.optional_cell(r, res)) g.resistance[res] = *v;
        g.maturity = t.optional_cell(r, "maturity").value_or("");
        if (auto days = parse_double(g.maturity); days && *days < 0.0)
            throw ParseError(where + ": maturity must be non-negative");
        g.plant_height_cm = non_negative("plant_height");
        g.thousand_grain_weight_g = non_negative("thousand_grain_weight");
        g.grain_hardness = t.optional_cell(r, "grain_hardness").value_or("");
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<GermplasmRecord> load_germplasm(const std::filesystem::path &path) {
    auto in = open(path, "germplasm table");
    return read_germplasm(in, path.string());
}

// ---------------------------------------------------------------------------
// Criteria

namespace {

const std::pair<const char *, Op> kOps[] = {{"<=", Op::le}, {">=", Op::ge}, {"==", Op::eq}, {"!=", Op::ne},
                                           {"<", Op::lt},  {">", Op::gt},  {"=", Op::eq}};

const char *op_text(Op op) {
    switch (op) {
    case Op::lt: return "<";
    case Op::le: return "<=";
    case Op::gt: return ">";
    case Op::ge: return ">=";
    case Op::eq: return "==";
    case Op::ne: return "!=";
    case Op::in: return " in ";
    }
    return "?";
}

} // namespace

Criterion Criterion::parse(const std::string &text) {
    Criterion c;
    auto in_pos = text.find(" in ");
    if (in_pos != std::string::npos) {
        c.field = std::string(trim(std::string_view(text).substr(0, in_pos)));
        c.op = Op::in;
        std::string_view rest = trim(std::string_view(text).substr(in_pos + 4));
        while (!rest.empty()) {
            auto bar = rest.find('|');
            c.values.emplace_back(trim(rest.substr(0, bar)));
            if (bar == std::string_view::npos) break;
            rest = rest.substr(bar + 1);
        }
    } else {
        std::size_t best = std::string::npos;
        std::size_t len = 0;
        for (const auto &[tok, op] : kOps) {
            auto pos = text.find(tok);
            if (pos != std::string::npos && (pos < best || (pos == best && std::string(tok).size() > len))) {
                best = pos;
                len = std::string(tok).size();
                c.op = op;
            }
        }
        if (best == std::string::npos) throw InvalidInput("criterion '" + text + "' has no comparison operator");
        c.field = std::string(trim(std::string_view(text).substr(0, best)));
        c.values.emplace_back(trim(std::string_view(text).substr(best + len)));
    }
    if (c.field.empty() || c.values.empty() || c.values.front().empty())
        throw InvalidInput("malformed criterion '" + text + "'");
    if (!contains(germplasm_fields(), c.field)) throw UnknownField("unknown germplasm field '" + c.field + "'");
    if (c.op != Op::in && c.op != Op::eq && c.op != Op::ne && !parse_double(c.values.front()))
        throw InvalidInput("criterion '" + text + "' compares against a non-numeric value");
    return c;
}

std::string Criterion::str() const {
    std::string out = field + op_text(op);
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "|" : "") + values[i];
    return out;
}

bool Criterion::matches(const GermplasmRecord &record) const {
    const FieldValue v = field_value(record, field);
    if (std::holds_alternative<std::monostate>(v)) return false;
    auto equal = [&](const std::string &want) {
        if (const double *d = std::get_if<double>(&v)) {
            auto w = parse_double(want);
            return w && *w == *d;
        }
        return std::get<std::string>(v) == want;
    };
    switch (op) {
    case Op::eq: return equal(values.front());
    case Op::ne: return !equal(values.front());
    case Op::in: return std::any_of(values.begin(), values.end(), equal);
    default: break;
    }
    const double *d = std::get_if<double>(&v);
    if (!d) return false;
    const double w = *parse_double(values.front());
    switch (op) {
    case Op::lt: return *d < w;
    case Op::le: return *d <= w;
    case Op::gt: return *d > w;
    case Op::ge: return *d >= w;
    default: return false;
    }
}

std::vector<GermplasmRecord> screen_germplasm(const std::vector<GermplasmRecord> &records,
                                              const std::vector<Criterion> &criteria) {
    if (criteria.empty()) throw InvalidInput("screen_germplasm needs at least one criterion");
    for (const auto &c : criteria)
        if (!contains(germplasm_fields(), c.field)) throw UnknownField("unknown germplasm field '" + c.field + "'");
    std::vector<GermplasmRecord> out;
    for (const auto &r : records)
        if (std::all_of(criteria.begin(), criteria.end(), [&](const Criterion &c) { return c.matches(r); }))
            out.push_back(r);
    std::stable_sort(out.begin(), out.end(),
                     [](const auto &a, const auto &b) { return a.variety_name < b.variety_name; });
    return out;
}

std::string to_string(Trait trait) {
    switch (trait) {
    case Trait::HQ: return "HQ";
    case Trait::DS: return "DS";
    case Trait::DR: return "DR";
    case Trait::MP: return "MP";
    case Trait::AM: return "AM";
    }
    return "?";
}

Trait trait_from_string(const std::string &name) {
    for (auto t : {Trait::HQ, Trait::DS, Trait::DR, Trait::MP, Trait::AM})
        if (to_string(t) == name) return t;
    throw InvalidInput("unknown trait '" + name + "' (expected HQ, DS, DR, MP or AM)");
}

std::vector<Criterion> trait_criteria(Trait trait, const TraitThresholds &th) {
    auto num = [](const std::string &field, Op op, double v) { return Criterion{field, op, {format_double(v)}}; };
    switch (trait) {
    case Trait::HQ:
        return {num("crude_protein", Op::ge, th.min_crude_protein),
                num("sedimentation_value", Op::ge, th.min_sedimentation)};
    case Trait::DS: return {Criterion{th.disease_field, Op::in, th.resistant_levels}};
    case Trait::DR: return {Criterion{"drought", Op::in, th.resistant_levels}};
    case Trait::MP: return {num("maturity", Op::le, th.max_maturity_days)};
    case Trait::AM: return {num("plant_height", Op::le, th.max_plant_height_cm)};
    }
    return {};
}

bool has_trait(const GermplasmRecord &record, Trait trait, const TraitThresholds &thresholds) {
    auto criteria = trait_criteria(trait, thresholds);
    return std::all_of(criteria.begin(), criteria.end(), [&](const Criterion &c) { return c.matches(record); });
}

// ---------------------------------------------------------------------------
// Prices

std::vector<PriceRecord> read_prices(std::istream &in, const std::string &source) {
    auto t = csv::Table::read(in, source);
    std::vector<PriceRecord> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto where = source + ":" + std::to_string(t.line_of(r));
        PriceRecord p;
        p.observation_point = std::string(trim(t.cell(r, "observation_point")));
        p.variety_name = std::string(trim(t.cell(r, "variety_name")));
        p.price = t.required_number(r, "price");
        p.specification = t.required_number(r, "specification");
        p.planting_area = t.optional_cell(r, "planting_area").value_or("");
        p.date = Date::parse(t.cell(r, "date"));
        if (!(p.price > 0.0)) throw ParseError(where + ": price must be positive");
        if (!(p.specification > 0.0)) throw ParseError(where + ": specification must be positive");
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<PriceRecord> load_prices(const std::filesystem::path &path) {
    auto in = open(path, "price table");
    return read_prices(in, path.string());
}

std::optional<std::vector<PriceRecord>> query_price(const std::vector<PriceRecord> &records,
                                                    const std::string &observation_point, const Date &date,
                                                    const std::optional<std::string> &variety) {
    std::optional<Date> chosen;
    long long chosen_gap = 0;
    for (const auto &r : records) {
        if (r.observation_point != observation_point) continue;
        if (variety && r.variety_name != *variety) continue;
        const long long gap = std::llabs(r.date.minus(date));
        if (gap > kPriceDateWindowDays) continue;
        if (!chosen || gap < chosen_gap || (gap == chosen_gap && r.date < *chosen)) {
            chosen = r.date;
            chosen_gap = gap;
        }
    }
    if (!chosen) return std::nullopt;
    std::vector<PriceRecord> out;
    for (const auto &r : records)
        if (r.observation_point == observation_point && r.date == *chosen && (!variety || r.variety_name == *variety))
            out.push_back(r);
    return out;
}

bool price_consistent(double answer_price, const PriceRecord &record) {
    return within_ten_percent(answer_price, record.price);
}

// ---------------------------------------------------------------------------
// Documents

std::vector<DocRecord> read_docs(std::istream &in, const std::string &source) {
    auto t = csv::Table::read(in, source);
    std::vector<DocRecord> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto where = source + ":" + std::to_string(t.line_of(r));
        DocRecord d;
        d.doc_id = std::string(trim(t.cell(r, "doc_id")));
        auto cat = std::string(trim(t.cell(r, "category")));
        if (cat == "cultivation") {
            d.category = DocCategory::cultivation;
        } else if (cat == "plant_protection") {
            d.category = DocCategory::plant_protection;
        } else {
            throw ParseError(where + ": unknown category '" + cat + "'");
        }
        d.title = t.cell(r, "title");
        d.body = t.cell(r, "body");
        d.source = t.optional_cell(r, "source").value_or("");
        if (trim(d.body).empty()) throw ParseError(where + ": empty document body");
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<DocRecord> load_docs(const std::filesystem::path &path) {
    auto in = open(path, "document table");
    return read_docs(in, path.string());
}

std::vector<DocRecord> search_docs(const std::vector<DocRecord> &docs, const std::string &needle,
                                   std::optional<DocCategory> category) {
    std::vector<DocRecord> out;
    for (const auto &d : docs) {
        if (category && d.category != *category) continue;
        if (d.title.find(needle) != std::string::npos || d.body.find(needle) != std::string::npos) out.push_back(d);
    }
    return out;
}

} // namespace breedkit::kb
