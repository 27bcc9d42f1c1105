#include "breedkit/bench.hpp"

#include "breedkit/csv.hpp"
#include "breedkit/error.hpp"
#include "breedkit/format.hpp"
#include "breedkit/fusion.hpp"
#include "breedkit/parallel.hpp"
#include "breedkit/tolerance.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

namespace breedkit::bench {

namespace {

constexpr std::array kTaskNames{"phenotyping_estimation", "environmental_stress", "germplasm_screening",
                                "cultivation_recommendation", "seed_price_query"};
constexpr std::array kSubtaskNames{"Yield", "SPAD", "LAI", "CH", "CV", "WH", "PL", "WL", "FVC",
                                   "HQ",    "DS",   "DR",  "MP", "AM", "CT", "PPT", "SP"};

std::ifstream open(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

std::optional<bool> parse_bool(const std::optional<std::string> &text, const std::string &where) {
    if (!text) return std::nullopt;
    const auto t = to_lower(*text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ParseError(where + ": expected a boolean, got \"" + *text + "\"");
}

} // namespace

std::string to_string(Task t) { return kTaskNames[static_cast<std::size_t>(t)]; }
std::string to_string(Subtask s) { return kSubtaskNames[static_cast<std::size_t>(s)]; }

std::string to_string(AnswerKind k) {
    switch (k) {
    case AnswerKind::numeric_regression: return "numeric_regression";
    case AnswerKind::categorical: return "categorical";
    case AnswerKind::judged_correctness: return "judged_correctness";
    case AnswerKind::price_consistency: return "price_consistency";
    }
    return "?";
}

Task task_from_string(const std::string &name) {
    for (std::size_t i = 0; i < kTaskNames.size(); ++i)
        if (name == kTaskNames[i]) return static_cast<Task>(i);
    throw InvalidInput("unknown task \"" + name + "\"");
}

Subtask subtask_from_string(const std::string &name) {
    for (std::size_t i = 0; i < kSubtaskNames.size(); ++i)
        if (name == kSubtaskNames[i]) return static_cast<Subtask>(i);
    throw InvalidInput("unknown subtask \"" + name + "\"");
}

Task task_of(Subtask s) {
    switch (s) {
    case Subtask::Yield:
    case Subtask::SPAD:
    case Subtask::LAI:
    case Subtask::CH:
    case Subtask::CV:
    case Subtask::WH:
    case Subtask::PL: return Task::phenotyping_estimation;
    case Subtask::WL:
    case Subtask::FVC: return Task::environmental_stress;
    case Subtask::HQ:
    case Subtask::DS:
    case Subtask::DR:
    case Subtask::MP:
    case Subtask::AM: return Task::germplasm_screening;
    case Subtask::CT:
    case Subtask::PPT: return Task::cultivation_recommendation;
    case Subtask::SP: return Task::seed_price_query;
    }
    throw InvalidInput("bad subtask");
}

AnswerKind answer_kind(Subtask s) {
    switch (s) {
    case Subtask::PL:
    case Subtask::WL: return AnswerKind::categorical;
    case Subtask::Yield:
    case Subtask::SPAD:
    case Subtask::LAI:
    case Subtask::CH:
    case Subtask::CV:
    case Subtask::WH:
    case Subtask::FVC: return AnswerKind::numeric_regression;
    case Subtask::SP: return AnswerKind::price_consistency;
    default: return AnswerKind::judged_correctness;
    }
}

const std::vector<Subtask> &all_subtasks() {
    static const std::vector<Subtask> all = [] {
        std::vector<Subtask> v;
        for (std::size_t i = 0; i < kSubtaskNames.size(); ++i) v.push_back(static_cast<Subtask>(i));
        return v;
    }();
    return all;
}

TaskSpec::TaskSpec(Task t, Subtask s) : task(t), subtask(s) {
    if (task_of(s) != t)
        throw InvalidTrialSet("subtask " + to_string(s) + " does not belong to task " + to_string(t));
}

// ---------------------------------------------------------------------------
// Trials

namespace {

void check_fields(const TrialRecord &t, const std::string &where) {
    if (t.protocol != Protocol::none) {
        const bool numeric = t.answer_numeric && t.reference_value;
        if (!numeric && !t.text_pass)
            throw InvalidTrialSet(where + ": stability trial needs a numeric answer and reference or a text_pass flag");
        return;
    }
    switch (t.spec.kind()) {
    case AnswerKind::numeric_regression:
    case AnswerKind::price_consistency:
        if (!t.answer_numeric || !t.reference_value)
            throw InvalidTrialSet(where + ": " + to_string(t.spec.subtask) +
                                  " trial needs answer_numeric and reference_value");
        break;
    case AnswerKind::categorical:
        if (!t.reference_label) throw InvalidTrialSet(where + ": categorical trial needs reference_label");
        break;
    case AnswerKind::judged_correctness:
        if (!t.judged_correct) throw InvalidTrialSet(where + ": judged trial needs judged_correct");
        break;
    }
}

auto trial_key(const TrialRecord &t) {
    return std::tie(t.model_id, t.spec.subtask, t.question_id, t.protocol, t.trial_index);
}

} // namespace

std::vector<TrialRecord> read_trials(std::istream &in, const std::string &source) {
    const auto table = csv::Table::read(in, source);
    for (const char *col : {"model_id", "task", "subtask", "question_id", "trial_index"}) table.column(col);
    std::vector<TrialRecord> out;
    std::set<std::tuple<std::string, std::string, std::string, std::size_t>> seen;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        const std::string where = source + ":" + std::to_string(table.line_of(r));
        TrialRecord t;
        t.model_id = std::string(trim(table.cell(r, "model_id")));
        if (t.model_id.empty()) throw ParseError(where + ": empty model_id");
        try {
            t.spec = TaskSpec(task_from_string(std::string(trim(table.cell(r, "task")))),
                              subtask_from_string(std::string(trim(table.cell(r, "subtask")))));
        } catch (const InvalidInput &e) {
            throw ParseError(where + ": " + e.what());
        } catch (const InvalidTrialSet &e) {
            throw InvalidTrialSet(where + ": " + e.what());
        }
        t.question_id = std::string(trim(table.cell(r, "question_id")));
        const auto idx = parse_integer(trim(table.cell(r, "trial_index")));
        if (!idx || *idx < 0) throw ParseError(where + ": trial_index must be a non-negative integer");
        t.trial_index = static_cast<std::size_t>(*idx);
        t.answer_numeric = table.number(r, "answer_numeric");
        t.answer_label = table.optional_cell(r, "answer_label");
        t.judged_correct = parse_bool(table.optional_cell(r, "judged_correct"), where);
        t.reference_value = table.number(r, "reference_value");
        t.reference_label = table.optional_cell(r, "reference_label");
        t.text_pass = parse_bool(table.optional_cell(r, "text_pass"), where);
        if (auto p = table.optional_cell(r, "stability_protocol")) {
            if (*p == "consistency") t.protocol = Protocol::consistency;
            else if (*p == "robustness") t.protocol = Protocol::robustness;
            else if (*p != "none") throw ParseError(where + ": unknown stability_protocol \"" + *p + "\"");
        }
        check_fields(t, where);
        const std::string proto = t.protocol == Protocol::none ? "" : (t.protocol == Protocol::consistency ? "c" : "r");
        if (!seen.emplace(t.model_id, t.question_id, proto, t.trial_index).second)
            throw InvalidTrialSet(where + ": duplicate trial_index " + std::to_string(t.trial_index) + " for model " +
                                  t.model_id + " question " + t.question_id);
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<TrialRecord> load_trials(const std::filesystem::path &path) {
    auto in = open(path);
    return read_trials(in, path.string());
}

// ---------------------------------------------------------------------------
// Scorers

AccuracyScore score_accuracy(const std::vector<TrialRecord> &trials) {
    if (trials.empty()) throw EmptyInput("no trials to score");
    const Subtask subtask = trials.front().spec.subtask;
    const AnswerKind kind = answer_kind(subtask);
    for (const auto &t : trials) {
        if (t.spec.kind() != kind)
            throw InvalidTrialSet("mixed answer kinds: " + to_string(kind) + " and " + to_string(t.spec.kind()));
        if (t.spec.subtask != subtask)
            throw InvalidTrialSet("mixed subtasks: " + to_string(subtask) + " and " + to_string(t.spec.subtask));
    }
    std::vector<const TrialRecord *> sorted;
    for (const auto &t : trials) sorted.push_back(&t);
    std::sort(sorted.begin(), sorted.end(), [](auto *a, auto *b) { return trial_key(*a) < trial_key(*b); });

    AccuracyScore s;
    s.kind = kind;
    s.n_trials = sorted.size();
    if (kind == AnswerKind::numeric_regression) {
        std::vector<double> truth, pred;
        for (const auto *t : sorted) {
            if (!t->answer_numeric || !t->reference_value)
                throw InvalidTrialSet("regression trial " + t->question_id + " lacks a numeric answer or reference");
            truth.push_back(*t->reference_value);
            pred.push_back(*t->answer_numeric);
        }
        s.rmse = fusion::rmse(truth, pred);
        try {
            s.r2 = fusion::metrics(truth, pred).r2;
        } catch (const UndefinedR2 &) {
            s.r2.reset();
        }
        return s;
    }
    std::size_t pass = 0;
    for (const auto *t : sorted) {
        switch (kind) {
        case AnswerKind::categorical:
            if (!t->reference_label) throw InvalidTrialSet("categorical trial " + t->question_id + " lacks a label");
            pass += t->answer_label && *t->answer_label == *t->reference_label;
            break;
        case AnswerKind::judged_correctness:
            if (!t->judged_correct) throw InvalidTrialSet("judged trial " + t->question_id + " lacks a judgement");
            pass += *t->judged_correct;
            break;
        case AnswerKind::price_consistency:
            if (!t->answer_numeric || !t->reference_value)
                throw InvalidTrialSet("price trial " + t->question_id + " lacks an answer or reference");
            pass += within_ten_percent(*t->answer_numeric, *t->reference_value);
            break;
        default: break;
        }
    }
    s.proportion = static_cast<double>(pass) / static_cast<double>(sorted.size());
    return s;
}

bool numeric_stable(double answer, double reference) {
    if (reference == 0.0) throw UndefinedDeviation("relative deviation undefined for a zero reference");
    return within_ten_percent(answer, reference);
}

StabilityScore score_stability(const std::vector<TrialRecord> &trials) {
    std::vector<const TrialRecord *> sorted;
    for (const auto &t : trials)
        if (t.protocol != Protocol::none) sorted.push_back(&t);
    std::sort(sorted.begin(), sorted.end(), [](auto *a, auto *b) { return trial_key(*a) < trial_key(*b); });

    StabilityScore s;
    std::size_t pass_c = 0, pass_r = 0;
    for (const auto *t : sorted) {
        bool pass = false;
        if (t->answer_numeric && t->reference_value) {
            try {
                pass = numeric_stable(*t->answer_numeric, *t->reference_value);
            } catch (const UndefinedDeviation &e) {
                s.excluded.push_back({t->model_id, t->question_id, t->trial_index, "UndefinedDeviation"});
                continue;
            }
        } else if (t->text_pass) {
            pass = *t->text_pass;
        } else {
            throw InvalidTrialSet("stability trial " + t->question_id + " has neither numeric answer nor text flag");
        }
        if (t->protocol == Protocol::consistency) {
            ++s.n_consistency;
            pass_c += pass;
        } else {
            ++s.n_robustness;
            pass_r += pass;
        }
    }
    if (s.n_consistency) s.consistency = static_cast<double>(pass_c) / static_cast<double>(s.n_consistency);
    if (s.n_robustness) s.robustness = static_cast<double>(pass_r) / static_cast<double>(s.n_robustness);
    return s;
}

// ---------------------------------------------------------------------------
// Reasoning

std::vector<ReasoningBallot> read_ballots(std::istream &in, const std::string &source) {
    const auto table = csv::Table::read(in, source);
    for (const char *col : {"test_id", "model_id", "score"}) table.column(col);
    std::map<std::pair<std::string, std::string>, ReasoningBallot> by_key;
    std::vector<std::pair<std::string, std::string>> order;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        const std::string where = source + ":" + std::to_string(table.line_of(r));
        const std::string test = std::string(trim(table.cell(r, "test_id")));
        const std::string axis = table.optional_cell(r, "axis").value_or("overall");
        const std::string model = std::string(trim(table.cell(r, "model_id")));
        const auto score = parse_integer(trim(table.cell(r, "score")));
        if (!score) throw ParseError(where + ": score must be an integer");
        auto key = std::make_pair(test, axis);
        auto [it, inserted] = by_key.try_emplace(key);
        if (inserted) {
            it->second.test_id = test;
            it->second.axis = axis;
            order.push_back(key);
        }
        if (!it->second.scores.emplace(model, static_cast<int>(*score)).second)
            throw InvalidBallot(where + ": model " + model + " scored twice in test " + test);
    }
    std::vector<ReasoningBallot> out;
    for (const auto &k : order) out.push_back(std::move(by_key[k]));
    return out;
}

std::vector<ReasoningBallot> load_ballots(const std::filesystem::path &path) {
    auto in = open(path);
    return read_ballots(in, path.string());
}

namespace {

void check_ballots(const std::vector<ReasoningBallot> &ballots) {
    if (ballots.empty()) throw EmptyInput("no reasoning ballots");
    std::set<std::string> models;
    for (const auto &[m, _] : ballots.front().scores) models.insert(m);
    const int x = static_cast<int>(models.size());
    for (const auto &b : ballots) {
        std::set<std::string> these;
        std::vector<bool> used(static_cast<std::size_t>(x) + 1, false);
        for (const auto &[m, score] : b.scores) {
            these.insert(m);
            if (score < 1 || score > x || used[static_cast<std::size_t>(score)])
                throw InvalidBallot("ballot " + b.test_id + " is not a permutation of 1.." + std::to_string(x));
            used[static_cast<std::size_t>(score)] = true;
        }
        if (these != models) throw InvalidBallot("ballot " + b.test_id + " does not cover the same models");
    }
}

} // namespace

double score_reasoning(const std::vector<ReasoningBallot> &ballots, const std::string &model_id) {
    check_ballots(ballots);
    const auto x = static_cast<long long>(ballots.front().scores.size());
    if (!ballots.front().scores.contains(model_id)) throw InvalidInput("model " + model_id + " is not on the ballots");
    long long total = 0;
    for (const auto &b : ballots) total += b.scores.at(model_id);
    const long long denom = static_cast<long long>(ballots.size()) * x * (x + 1) / 2;
    return static_cast<double>(total) / static_cast<double>(denom);
}

// ---------------------------------------------------------------------------
// Report

BenchmarkReport build_report(const std::vector<TrialRecord> &trials, const std::vector<ReasoningBallot> &ballots,
                             unsigned threads) {
    std::map<std::pair<std::string, Subtask>, std::vector<TrialRecord>> groups;
    std::set<std::string> models;
    for (const auto &t : trials) {
        groups[{t.model_id, t.spec.subtask}].push_back(t);
        models.insert(t.model_id);
    }
    for (const auto &b : ballots)
        for (const auto &[m, _] : b.scores) models.insert(m);
    if (models.empty()) throw EmptyInput("benchmark report needs at least one model");

    std::vector<std::pair<std::string, Subtask>> keys;
    for (const auto &[k, _] : groups) keys.push_back(k);
    std::vector<std::optional<AccuracyRow>> acc(keys.size());
    std::vector<std::optional<StabilityRow>> stab(keys.size());
    parallel_for(keys.size(), threads, [&](std::size_t i) {
        const auto &group = groups.at(keys[i]);
        std::vector<TrialRecord> plain;
        bool tagged = false;
        for (const auto &t : group) {
            if (t.protocol == Protocol::none) plain.push_back(t);
            else tagged = true;
        }
        if (!plain.empty()) acc[i] = AccuracyRow{keys[i].first, keys[i].second, score_accuracy(plain)};
        if (tagged) stab[i] = StabilityRow{keys[i].first, keys[i].second, score_stability(group)};
    });

    BenchmarkReport report;
    report.models.assign(models.begin(), models.end());
    for (auto &a : acc)
        if (a) report.accuracy.push_back(std::move(*a));
    for (auto &s : stab)
        if (s) report.stability.push_back(std::move(*s));

    if (!ballots.empty()) {
        std::map<std::string, std::vector<ReasoningBallot>> by_axis;
        for (const auto &b : ballots) by_axis[b.axis].push_back(b);
        std::vector<ReasoningRow> rows;
        for (const auto &[axis, group] : by_axis) {
            check_ballots(group);
            for (const auto &[m, _] : group.front().scores)
                rows.push_back({m, axis, group.size(), score_reasoning(group, m)});
        }
        std::sort(rows.begin(), rows.end(),
                  [](const auto &a, const auto &b) { return std::tie(a.model_id, a.axis) < std::tie(b.model_id, b.axis); });
        report.reasoning = std::move(rows);
    }
    return report;
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double> &v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string opt_text(const std::optional<double> &v) { return v ? format_double(*v) : ""; }

} // namespace

void write_report_json(std::ostream &out, const BenchmarkReport &report) {
    nlohmann::ordered_json j;
    j["models"] = report.models;
    auto acc = nlohmann::ordered_json::array();
    for (const auto &a : report.accuracy) {
        nlohmann::ordered_json row;
        row["model_id"] = a.model_id;
        row["task"] = to_string(task_of(a.subtask));
        row["subtask"] = to_string(a.subtask);
        row["answer_kind"] = to_string(a.score.kind);
        row["n_trials"] = a.score.n_trials;
        if (a.score.kind == AnswerKind::numeric_regression) {
            row["r2"] = opt_json(a.score.r2);
            row["rmse"] = opt_json(a.score.rmse);
        } else {
            row["proportion"] = opt_json(a.score.proportion);
        }
        acc.push_back(row);
    }
    j["accuracy"] = acc;
    auto stab = nlohmann::ordered_json::array();
    for (const auto &s : report.stability) {
        nlohmann::ordered_json row;
        row["model_id"] = s.model_id;
        row["subtask"] = to_string(s.subtask);
        row["n_consistency"] = s.score.n_consistency;
        row["consistency"] = opt_json(s.score.consistency);
        row["n_robustness"] = s.score.n_robustness;
        row["robustness"] = opt_json(s.score.robustness);
        auto ex = nlohmann::ordered_json::array();
        for (const auto &e : s.score.excluded)
            ex.push_back({{"question_id", e.question_id}, {"trial_index", e.trial_index}, {"reason", e.reason}});
        row["excluded"] = ex;
        stab.push_back(row);
    }
    j["stability"] = stab;
    if (report.reasoning) {
        auto rs = nlohmann::ordered_json::array();
        for (const auto &r : *report.reasoning)
            rs.push_back({{"model_id", r.model_id}, {"axis", r.axis}, {"n_tests", r.n_tests},
                          {"proportion", r.proportion}});
        j["reasoning"] = rs;
    }
    out << j.dump(2) << '\n';
}

void write_accuracy_csv(std::ostream &out, const BenchmarkReport &report) {
    csv::write_row(out, {"model_id", "task", "subtask", "answer_kind", "n_trials", "r2", "rmse", "proportion"});
    for (const auto &a : report.accuracy)
        csv::write_row(out, {a.model_id, to_string(task_of(a.subtask)), to_string(a.subtask), to_string(a.score.kind),
                             std::to_string(a.score.n_trials), opt_text(a.score.r2), opt_text(a.score.rmse),
                             opt_text(a.score.proportion)});
}

void write_stability_csv(std::ostream &out, const BenchmarkReport &report) {
    csv::write_row(out, {"model_id", "subtask", "n_consistency", "consistency", "n_robustness", "robustness",
                         "n_excluded"});
    for (const auto &s : report.stability)
        csv::write_row(out, {s.model_id, to_string(s.subtask), std::to_string(s.score.n_consistency),
                             opt_text(s.score.consistency), std::to_string(s.score.n_robustness),
                             opt_text(s.score.robustness), std::to_string(s.score.excluded.size())});
}

void write_reasoning_csv(std::ostream &out, const BenchmarkReport &report) {
    csv::write_row(out, {"model_id", "axis", "n_tests", "proportion"});
    if (!report.reasoning) return;
    for (const auto &r : *report.reasoning)
        csv::write_row(out, {r.model_id, r.axis, std::to_string(r.n_tests), format_double(r.proportion)});
}

} // namespace breedkit::bench
