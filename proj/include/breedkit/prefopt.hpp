#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace breedkit::prefopt {

using Tokens = std::vector<int>;

// Conditioning state of one generation step: the prompt and the most recent
// answer tokens (truncated to the policy's context length).
struct StateKey {
    Tokens prompt;
    Tokens prefix;
    friend auto operator<=>(const StateKey &, const StateKey &) = default;
};

// Sparse logits; absent rows are all-zero (uniform).
using LogitTable = std::map<StateKey, std::vector<double>>;

// Tabular softmax policy over a vocabulary of V tokens.
class PolicyModel {
  public:
    PolicyModel(int vocab_size, int context_length);

    int vocab_size() const { return vocab_size_; }
    int context_length() const { return context_length_; }

    StateKey state(const Tokens &prompt, std::span<const int> answer_prefix) const;
    std::vector<double> logits(const StateKey &state) const;
    std::vector<double> &mutable_logits(const StateKey &state);
    std::vector<double> log_softmax(const StateKey &state) const;
    std::vector<double> probabilities(const StateKey &state) const;

    const LogitTable &table() const { return table_; }
    // logits += scale * delta, row by row.
    void add(const LogitTable &delta, double scale);

    // Throws InvalidToken for tokens outside [0, V).
    void check_tokens(const Tokens &tokens) const;

    // Equal logits for every state (absent rows compare as zeros).
    bool same_parameters(const PolicyModel &other) const;

  private:
    int vocab_size_;
    int context_length_;
    LogitTable table_;
};

// Frozen snapshot used as the KL anchor. Holds a copy; no mutable access.
class ReferencePolicy {
  public:
    explicit ReferencePolicy(PolicyModel snapshot) : model_(std::move(snapshot)) {}
    const PolicyModel &model() const { return model_; }

  private:
    PolicyModel model_;
};

// Scalar scorer linear in answer token counts and prompt x answer token
// co-occurrence counts: V + V*V weights.
class RewardModel {
  public:
    explicit RewardModel(int vocab_size);

    int vocab_size() const { return vocab_size_; }
    std::span<const double> weights() const { return weights_; }
    std::span<double> weights() { return weights_; }

    std::vector<double> features(const Tokens &prompt, const Tokens &answer) const;
    double score(const Tokens &prompt, const Tokens &answer) const;

  private:
    int vocab_size_;
    std::vector<double> weights_;
};

struct SftExample {
    Tokens prompt;
    Tokens answer;
};

struct PreferenceExample {
    Tokens prompt;
    Tokens chosen;   // preferred
    Tokens rejected;
};

// Sum over answer tokens of log pi(y_t | x, y_<t).
double answer_log_prob(const PolicyModel &policy, const Tokens &prompt, const Tokens &answer);

struct SftLossGrad {
    double loss = 0.0;
    LogitTable gradient;
};

// Negative mean answer log-likelihood and its exact gradient in logit space.
SftLossGrad sft_loss_and_grad(const PolicyModel &policy, std::span<const SftExample> dataset);

struct RmLossGrad {
    double loss = 0.0;
    std::vector<double> gradient;
};

// log(sigmoid(d)) without overflow.
double log_sigmoid(double d);

// -mean log sigmoid(r(x, chosen) - r(x, rejected)) and its gradient.
RmLossGrad rm_loss_and_grad(const RewardModel &rm, std::span<const PreferenceExample> dataset);

// r_phi(x, y) - beta * (log pi(y|x) - log pi_ref(y|x)).
double combined_reward(const RewardModel &rm, const PolicyModel &policy, const ReferencePolicy &reference,
                       const Tokens &prompt, const Tokens &answer, double beta);

struct RLHFConfig {
    double beta = 0.1;
    double learning_rate = 0.5;
    double ppo_clip = 0.2;
    std::size_t iterations = 100;
    std::uint64_t seed = 0;
    std::size_t samples_per_prompt = 16;
    std::size_t answer_length = 1;
    std::size_t minibatches = 4;
    bool normalize_advantages = true;

    void validate() const; // InvalidInput
};

struct StepDiagnostics {
    std::size_t iteration = 0;
    double mean_reward = 0.0; // mean combined reward of the sampled answers
    double mean_score = 0.0;  // mean reward-model score
    double mean_kl = 0.0;     // sampled estimate of KL(pi || pi_ref)
    double exact_kl = 0.0;    // mean over prompts by enumeration (NaN if too large)
    double clip_fraction = 0.0;
    double penalized_score = 0.0; // mean_score - beta * mean_kl
};

struct RlhfStepResult {
    PolicyModel policy;
    StepDiagnostics diagnostics;
};

// One PPO iteration: sample answers from the current policy, score them with
// the KL-penalised reward, and take one pass of clipped-surrogate ascent over
// `minibatches` interleaved minibatches. Sampling is seeded by
// (config.seed, iteration). Throws NumericalError on a non-finite gradient.
RlhfStepResult rlhf_step(const PolicyModel &policy, const ReferencePolicy &reference, const RewardModel &rm,
                         const std::vector<Tokens> &prompts, const RLHFConfig &config, std::size_t iteration = 0);

struct RlhfRun {
    PolicyModel policy;
    std::vector<StepDiagnostics> diagnostics;
};

RlhfRun rlhf_train(PolicyModel policy, const ReferencePolicy &reference, const RewardModel &rm,
                   const std::vector<Tokens> &prompts, const RLHFConfig &config);

Tokens sample_answer(const PolicyModel &policy, const Tokens &prompt, std::size_t length, std::mt19937_64 &rng);

// KL(pi(.|x) || pi_ref(.|x)) over all V^length answers. Throws InvalidInput
// when the enumeration would exceed `max_sequences`.
double exact_kl(const PolicyModel &policy, const PolicyModel &reference, const Tokens &prompt, std::size_t length,
                std::size_t max_sequences = 1u << 16);

// All K(K-1)/2 (better, worse) pairs from answers ranked best first.
// `ranking` lists answer indices from best to worst.
std::vector<PreferenceExample> pairwise_expand(const Tokens &prompt, const std::vector<Tokens> &answers,
                                               const std::vector<std::size_t> &ranking);

// Full-batch gradient descent; returns the loss before each epoch and the final loss.
std::vector<double> train_sft(PolicyModel &policy, std::span<const SftExample> dataset, double learning_rate,
                              std::size_t epochs);
std::vector<double> train_reward_model(RewardModel &rm, std::span<const PreferenceExample> dataset,
                                       double learning_rate, std::size_t epochs);

// Breeder stand-in: higher is better.
using Labeler = std::function<double(const Tokens &prompt, const Tokens &answer)>;

struct IterativeConfig {
    std::size_t rounds = 3;
    std::size_t answers_per_prompt = 4; // K
    double rm_learning_rate = 0.5;
    std::size_t rm_epochs = 200;
    RLHFConfig rl;
};

struct IterativeRound {
    std::size_t round = 0;
    std::size_t new_pairs = 0;
    double rm_loss = 0.0;
    std::vector<StepDiagnostics> steps;
};

struct IterativeResult {
    PolicyModel policy;
    RewardModel rm;
    std::vector<IterativeRound> rounds;
};

// Alternates reward-model retraining on fresh comparisons collected from the
// current policy with PPO iterations against the refreshed reward model.
IterativeResult iterative_rlhf(PolicyModel policy, const ReferencePolicy &reference, RewardModel rm,
                               const std::vector<Tokens> &prompts, const Labeler &labeler,
                               const IterativeConfig &config);

// Line-delimited JSON datasets.
std::vector<SftExample> read_sft_jsonl(std::istream &in, const std::string &source = "<stream>");
// Lines are {"prompt","chosen","rejected"} or {"prompt","ranked":[best..worst]}.
std::vector<PreferenceExample> read_preference_jsonl(std::istream &in, const std::string &source = "<stream>");
std::vector<Tokens> read_prompt_jsonl(std::istream &in, const std::string &source = "<stream>");

void save_policy(std::ostream &out, const PolicyModel &policy);
PolicyModel load_policy(std::istream &in, const std::string &source = "<stream>");
void save_reward_model(std::ostream &out, const RewardModel &rm);
RewardModel load_reward_model(std::istream &in, const std::string &source = "<stream>");

void write_loss_csv(std::ostream &out, std::span<const double> losses);
void write_step_csv(std::ostream &out, std::span<const StepDiagnostics> steps);

} // namespace breedkit::prefopt
