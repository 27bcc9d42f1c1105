#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace breedkit::bench {

enum class Task { phenotyping_estimation, environmental_stress, germplasm_screening, cultivation_recommendation,
                  seed_price_query };

enum class Subtask { Yield, SPAD, LAI, CH, CV, WH, PL, WL, FVC, HQ, DS, DR, MP, AM, CT, PPT, SP };

enum class AnswerKind { numeric_regression, categorical, judged_correctness, price_consistency };

std::string to_string(Task t);
std::string to_string(Subtask s);
std::string to_string(AnswerKind k);
Task task_from_string(const std::string &name);       // InvalidInput
Subtask subtask_from_string(const std::string &name); // InvalidInput

Task task_of(Subtask s);
AnswerKind answer_kind(Subtask s);
const std::vector<Subtask> &all_subtasks();

struct TaskSpec {
    Task task;
    Subtask subtask;

    // Throws InvalidTrialSet when the subtask is not part of the task.
    TaskSpec(Task task, Subtask subtask);
    AnswerKind kind() const { return answer_kind(subtask); }
};

// Which protocol produced a trial: plain accuracy runs, repeated runs on the
// same input (consistency), or runs on perturbed inputs (robustness).
enum class Protocol { none, consistency, robustness };

struct TrialRecord {
    std::string model_id;
    TaskSpec spec{Task::phenotyping_estimation, Subtask::Yield};
    std::string question_id;
    std::size_t trial_index = 0;
    std::optional<double> answer_numeric;
    std::optional<std::string> answer_label;
    std::optional<bool> judged_correct;
    std::optional<double> reference_value;
    std::optional<std::string> reference_label;
    Protocol protocol = Protocol::none;
    std::optional<bool> text_pass;
};

// Validates fields against the answer kind and (model, question, trial)
// uniqueness. Throws ParseError / InvalidTrialSet.
std::vector<TrialRecord> read_trials(std::istream &in, const std::string &source = "<stream>");
std::vector<TrialRecord> load_trials(const std::filesystem::path &path);

struct AccuracyScore {
    AnswerKind kind = AnswerKind::judged_correctness;
    std::size_t n_trials = 0;
    // Regression: r2 is absent when the references have no variance.
    std::optional<double> r2;
    std::optional<double> rmse;
    // Categorical / judged / price: passing trials over all trials.
    std::optional<double> proportion;
};

// Trials must share one subtask (and therefore one answer kind); otherwise
// InvalidTrialSet. Throws EmptyInput on no trials.
AccuracyScore score_accuracy(const std::vector<TrialRecord> &trials);

struct ExcludedTrial {
    std::string model_id;
    std::string question_id;
    std::size_t trial_index = 0;
    std::string reason;
};

struct StabilityScore {
    std::size_t n_consistency = 0;
    std::size_t n_robustness = 0;
    std::optional<double> consistency; // absent when no such trials
    std::optional<double> robustness;
    std::vector<ExcludedTrial> excluded;
};

// Numeric pass iff |answer - reference| <= 0.10 |reference| (inclusive);
// text pass iff the recorded flag is true. Trials without a protocol tag are
// ignored. A zero reference excludes the trial (see excluded).
StabilityScore score_stability(const std::vector<TrialRecord> &trials);

// Throws UndefinedDeviation for a zero reference.
bool numeric_stable(double answer, double reference);

struct ReasoningBallot {
    std::string test_id;
    std::string axis = "overall";
    std::map<std::string, int> scores; // model_id -> 1..x
};

// Rows: test_id, model_id, score[, axis].
std::vector<ReasoningBallot> read_ballots(std::istream &in, const std::string &source = "<stream>");
std::vector<ReasoningBallot> load_ballots(const std::filesystem::path &path);

// Sum of the model's scores over N / (N x (x + 1) / 2). Every ballot must
// score the same x models with a permutation of 1..x (InvalidBallot).
double score_reasoning(const std::vector<ReasoningBallot> &ballots, const std::string &model_id);

struct AccuracyRow {
    std::string model_id;
    Subtask subtask;
    AccuracyScore score;
};

struct StabilityRow {
    std::string model_id;
    Subtask subtask;
    StabilityScore score;
};

struct ReasoningRow {
    std::string model_id;
    std::string axis;
    std::size_t n_tests = 0;
    double proportion = 0.0;
};

struct BenchmarkReport {
    std::vector<std::string> models;
    std::vector<AccuracyRow> accuracy;   // sorted by (model, subtask)
    std::vector<StabilityRow> stability; // only (model, subtask) with tagged trials
    std::optional<std::vector<ReasoningRow>> reasoning; // absent without ballots
};

// Groups trials by (model, subtask) after a canonical sort, so the report does
// not depend on input order.
BenchmarkReport build_report(const std::vector<TrialRecord> &trials, const std::vector<ReasoningBallot> &ballots,
                             unsigned threads = 1);

void write_report_json(std::ostream &out, const BenchmarkReport &report);
void write_accuracy_csv(std::ostream &out, const BenchmarkReport &report);
void write_stability_csv(std::ostream &out, const BenchmarkReport &report);
void write_reasoning_csv(std::ostream &out, const BenchmarkReport &report);

} // namespace breedkit::bench
