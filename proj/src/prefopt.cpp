#include "breedkit/prefopt.hpp"

#include "breedkit/csv.hpp"
#include "breedkit/error.hpp"
#include "breedkit/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace breedkit::prefopt {

namespace {

std::vector<double> log_softmax_of(const std::vector<double> &logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - m);
    const double lse = m + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

void add_scaled(std::vector<double> &dst, const std::vector<double> &src, double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

} // namespace

// ---------------------------------------------------------------------------
// Policy

PolicyModel::PolicyModel(int vocab_size, int context_length) : vocab_size_(vocab_size), context_length_(context_length) {
    if (vocab_size < 2) throw InvalidInput("vocabulary needs at least 2 tokens");
    if (context_length < 0) throw InvalidInput("context length must be non-negative");
}

StateKey PolicyModel::state(const Tokens &prompt, std::span<const int> answer_prefix) const {
    const std::size_t keep = std::min<std::size_t>(answer_prefix.size(), static_cast<std::size_t>(context_length_));
    return {prompt, Tokens(answer_prefix.end() - static_cast<std::ptrdiff_t>(keep), answer_prefix.end())};
}

std::vector<double> PolicyModel::logits(const StateKey &state) const {
    auto it = table_.find(state);
    if (it == table_.end()) return std::vector<double>(static_cast<std::size_t>(vocab_size_), 0.0);
    return it->second;
}

std::vector<double> &PolicyModel::mutable_logits(const StateKey &state) {
    auto [it, _] = table_.try_emplace(state, std::vector<double>(static_cast<std::size_t>(vocab_size_), 0.0));
    return it->second;
}

std::vector<double> PolicyModel::log_softmax(const StateKey &state) const { return log_softmax_of(logits(state)); }

std::vector<double> PolicyModel::probabilities(const StateKey &state) const {
    auto lp = log_softmax(state);
    for (auto &v : lp) v = std::exp(v);
    return lp;
}

void PolicyModel::add(const LogitTable &delta, double scale) {
    for (const auto &[key, row] : delta) {
        if (row.size() != static_cast<std::size_t>(vocab_size_)) throw InvalidInput("logit row has wrong width");
        add_scaled(mutable_logits(key), row, scale);
    }
}

void PolicyModel::check_tokens(const Tokens &tokens) const {
    for (int t : tokens)
        if (t < 0 || t >= vocab_size_)
            throw InvalidToken("token " + std::to_string(t) + " outside vocabulary of size " + std::to_string(vocab_size_));
}

bool PolicyModel::same_parameters(const PolicyModel &other) const {
    if (vocab_size_ != other.vocab_size_ || context_length_ != other.context_length_) return false;
    for (const auto &[key, row] : table_)
        if (other.logits(key) != row) return false;
    for (const auto &[key, row] : other.table_)
        if (logits(key) != row) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Reward model

RewardModel::RewardModel(int vocab_size)
    : vocab_size_(vocab_size), weights_(static_cast<std::size_t>(vocab_size + vocab_size * vocab_size), 0.0) {
    if (vocab_size < 1) throw InvalidInput("reward model vocabulary must be non-empty");
}

std::vector<double> RewardModel::features(const Tokens &prompt, const Tokens &answer) const {
    const auto V = static_cast<std::size_t>(vocab_size_);
    std::vector<double> phi(weights_.size(), 0.0);
    for (int t : prompt)
        if (t < 0 || t >= vocab_size_) throw InvalidToken("prompt token " + std::to_string(t) + " outside vocabulary");
    for (int v : answer) {
        if (v < 0 || v >= vocab_size_) throw InvalidToken("answer token " + std::to_string(v) + " outside vocabulary");
        phi[static_cast<std::size_t>(v)] += 1.0;
        for (int u : prompt) phi[V + static_cast<std::size_t>(u) * V + static_cast<std::size_t>(v)] += 1.0;
    }
    return phi;
}

double RewardModel::score(const Tokens &prompt, const Tokens &answer) const {
    const auto phi = features(prompt, answer);
    double s = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) s += weights_[i] * phi[i];
    return s;
}

// ---------------------------------------------------------------------------
// Objectives

double answer_log_prob(const PolicyModel &policy, const Tokens &prompt, const Tokens &answer) {
    policy.check_tokens(prompt);
    policy.check_tokens(answer);
    double total = 0.0;
    for (std::size_t t = 0; t < answer.size(); ++t) {
        const auto lp = policy.log_softmax(policy.state(prompt, std::span(answer.data(), t)));
        total += lp[static_cast<std::size_t>(answer[t])];
    }
    return total;
}

namespace {

// Adds coeff * d log pi(answer|prompt) / d logits into `grad`.
void accumulate_log_prob_grad(const PolicyModel &policy, const Tokens &prompt, const Tokens &answer, double coeff,
                              LogitTable &grad) {
    const auto V = static_cast<std::size_t>(policy.vocab_size());
    for (std::size_t t = 0; t < answer.size(); ++t) {
        auto key = policy.state(prompt, std::span(answer.data(), t));
        const auto p = policy.probabilities(key);
        auto [it, _] = grad.try_emplace(std::move(key), std::vector<double>(V, 0.0));
        for (std::size_t v = 0; v < V; ++v) it->second[v] -= coeff * p[v];
        it->second[static_cast<std::size_t>(answer[t])] += coeff;
    }
}

} // namespace

SftLossGrad sft_loss_and_grad(const PolicyModel &policy, std::span<const SftExample> dataset) {
    if (dataset.empty()) throw InvalidInput("SFT dataset is empty");
    SftLossGrad out;
    const double n = static_cast<double>(dataset.size());
    double total = 0.0;
    for (const auto &ex : dataset) {
        total += answer_log_prob(policy, ex.prompt, ex.answer);
        // d(-log pi)/dlogits = softmax - onehot
        accumulate_log_prob_grad(policy, ex.prompt, ex.answer, -1.0 / n, out.gradient);
    }
    out.loss = -total / n;
    return out;
}

double log_sigmoid(double d) { return d >= 0.0 ? -std::log1p(std::exp(-d)) : d - std::log1p(std::exp(d)); }

RmLossGrad rm_loss_and_grad(const RewardModel &rm, std::span<const PreferenceExample> dataset) {
    if (dataset.empty()) throw InvalidInput("reward-model dataset is empty");
    RmLossGrad out;
    out.gradient.assign(rm.weights().size(), 0.0);
    const double n = static_cast<double>(dataset.size());
    double total = 0.0;
    for (const auto &ex : dataset) {
        const auto phi_w = rm.features(ex.prompt, ex.chosen);
        const auto phi_l = rm.features(ex.prompt, ex.rejected);
        double d = 0.0;
        for (std::size_t i = 0; i < phi_w.size(); ++i) d += rm.weights()[i] * (phi_w[i] - phi_l[i]);
        total += -log_sigmoid(d);
        // d/dd [-log sigmoid(d)] = -sigmoid(-d)
        const double coeff = -1.0 / (1.0 + std::exp(d)) / n;
        for (std::size_t i = 0; i < phi_w.size(); ++i) out.gradient[i] += coeff * (phi_w[i] - phi_l[i]);
    }
    out.loss = total / n;
    return out;
}

double combined_reward(const RewardModel &rm, const PolicyModel &policy, const ReferencePolicy &reference,
                       const Tokens &prompt, const Tokens &answer, double beta) {
    const double score = rm.score(prompt, answer);
    if (beta == 0.0) return score;
    return score - beta * (answer_log_prob(policy, prompt, answer) - answer_log_prob(reference.model(), prompt, answer));
}

// ---------------------------------------------------------------------------
// PPO

void RLHFConfig::validate() const {
    if (!(beta >= 0.0)) throw InvalidInput("beta must be >= 0");
    if (!(ppo_clip > 0.0 && ppo_clip < 1.0)) throw InvalidInput("ppo_clip must lie in (0,1)");
    if (!(learning_rate >= 0.0)) throw InvalidInput("learning rate must be >= 0");
    if (samples_per_prompt == 0) throw InvalidInput("samples_per_prompt must be positive");
    if (answer_length == 0) throw InvalidInput("answer_length must be positive");
    if (minibatches == 0) throw InvalidInput("minibatches must be positive");
}

Tokens sample_answer(const PolicyModel &policy, const Tokens &prompt, std::size_t length, std::mt19937_64 &rng) {
    Tokens answer;
    answer.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
        const auto p = policy.probabilities(policy.state(prompt, answer));
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        double cum = 0.0;
        int pick = -1;
        for (std::size_t v = 0; v < p.size(); ++v) {
            if (p[v] <= 0.0) continue;
            cum += p[v];
            pick = static_cast<int>(v);
            if (u < cum) break;
        }
        answer.push_back(pick);
    }
    return answer;
}

namespace {

double kl_from(const PolicyModel &policy, const PolicyModel &reference, const Tokens &prompt, Tokens &prefix,
               std::size_t remaining) {
    if (remaining == 0) return 0.0;
    const auto lp = policy.log_softmax(policy.state(prompt, prefix));
    const auto lq = reference.log_softmax(reference.state(prompt, prefix));
    double kl = 0.0;
    for (std::size_t v = 0; v < lp.size(); ++v) {
        const double p = std::exp(lp[v]);
        if (p == 0.0) continue;
        prefix.push_back(static_cast<int>(v));
        kl += p * (lp[v] - lq[v] + kl_from(policy, reference, prompt, prefix, remaining - 1));
        prefix.pop_back();
    }
    return kl;
}

} // namespace

double exact_kl(const PolicyModel &policy, const PolicyModel &reference, const Tokens &prompt, std::size_t length,
                std::size_t max_sequences) {
    if (policy.vocab_size() != reference.vocab_size()) throw InvalidInput("policy and reference vocabularies differ");
    double count = 1.0;
    for (std::size_t i = 0; i < length; ++i) count *= policy.vocab_size();
    if (count > static_cast<double>(max_sequences)) throw InvalidInput("answer space too large to enumerate");
    Tokens prefix;
    return kl_from(policy, reference, prompt, prefix, length);
}

RlhfStepResult rlhf_step(const PolicyModel &policy, const ReferencePolicy &reference, const RewardModel &rm,
                         const std::vector<Tokens> &prompts, const RLHFConfig &config, std::size_t iteration) {
    config.validate();
    if (prompts.empty()) throw InvalidInput("PPO needs at least one prompt");
    if (policy.vocab_size() != reference.model().vocab_size() || policy.vocab_size() != rm.vocab_size())
        throw InvalidInput("policy, reference and reward model vocabularies differ");
    for (const auto &x : prompts) policy.check_tokens(x);

    struct Sample {
        std::size_t prompt;
        Tokens answer;
        double logp_old;
        double advantage;
    };
    std::mt19937_64 rng(config.seed + 0x9E3779B97F4A7C15ULL * (iteration + 1));
    std::vector<Sample> samples;
    std::vector<double> rewards;
    StepDiagnostics diag;
    diag.iteration = iteration;
    for (std::size_t p = 0; p < prompts.size(); ++p) {
        for (std::size_t s = 0; s < config.samples_per_prompt; ++s) {
            Tokens y = sample_answer(policy, prompts[p], config.answer_length, rng);
            const double logp = answer_log_prob(policy, prompts[p], y);
            const double logq = answer_log_prob(reference.model(), prompts[p], y);
            const double score = rm.score(prompts[p], y);
            const double reward = score - config.beta * (logp - logq);
            diag.mean_score += score;
            diag.mean_kl += logp - logq;
            diag.mean_reward += reward;
            rewards.push_back(reward);
            samples.push_back({p, std::move(y), logp, 0.0});
        }
    }
    const double n = static_cast<double>(samples.size());
    diag.mean_score /= n;
    diag.mean_kl /= n;
    diag.mean_reward /= n;
    diag.penalized_score = diag.mean_score - config.beta * diag.mean_kl;

    // Advantage: reward minus the mean reward of the same prompt's samples.
    for (std::size_t p = 0; p < prompts.size(); ++p) {
        double mean = 0.0;
        for (std::size_t s = 0; s < config.samples_per_prompt; ++s) mean += rewards[p * config.samples_per_prompt + s];
        mean /= static_cast<double>(config.samples_per_prompt);
        for (std::size_t s = 0; s < config.samples_per_prompt; ++s) {
            const std::size_t i = p * config.samples_per_prompt + s;
            samples[i].advantage = rewards[i] - mean;
        }
    }
    if (config.normalize_advantages) {
        double ss = 0.0;
        for (const auto &s : samples) ss += s.advantage * s.advantage;
        const double sd = std::sqrt(ss / n);
        for (auto &s : samples) s.advantage = sd > 1e-12 ? s.advantage / sd : 0.0;
    }

    PolicyModel current = policy;
    std::size_t clipped = 0;
    const std::size_t mb_count = std::min(config.minibatches, samples.size());
    for (std::size_t mb = 0; mb < mb_count; ++mb) {
        LogitTable grad;
        std::size_t members = 0;
        for (std::size_t i = mb; i < samples.size(); i += mb_count) ++members;
        for (std::size_t i = mb; i < samples.size(); i += mb_count) {
            const auto &s = samples[i];
            const double ratio = std::exp(answer_log_prob(current, prompts[s.prompt], s.answer) - s.logp_old);
            const bool clip_active = (s.advantage > 0.0 && ratio > 1.0 + config.ppo_clip) ||
                                     (s.advantage < 0.0 && ratio < 1.0 - config.ppo_clip);
            if (clip_active) {
                ++clipped;
                continue;
            }
            const double coeff = s.advantage * ratio / static_cast<double>(members);
            if (coeff != 0.0) accumulate_log_prob_grad(current, prompts[s.prompt], s.answer, coeff, grad);
        }
        for (const auto &[_, row] : grad)
            for (double g : row)
                if (!std::isfinite(g))
                    throw NumericalError("non-finite policy gradient at iteration " + std::to_string(iteration));
        if (config.learning_rate != 0.0) current.add(grad, config.learning_rate);
    }
    diag.clip_fraction = static_cast<double>(clipped) / n;

    double kl_sum = 0.0;
    try {
        for (const auto &x : prompts) kl_sum += exact_kl(current, reference.model(), x, config.answer_length, 4096);
        diag.exact_kl = kl_sum / static_cast<double>(prompts.size());
    } catch (const InvalidInput &) {
        diag.exact_kl = std::numeric_limits<double>::quiet_NaN();
    }
    return {std::move(current), diag};
}

RlhfRun rlhf_train(PolicyModel policy, const ReferencePolicy &reference, const RewardModel &rm,
                   const std::vector<Tokens> &prompts, const RLHFConfig &config) {
    RlhfRun run{std::move(policy), {}};
    for (std::size_t it = 0; it < config.iterations; ++it) {
        auto step = rlhf_step(run.policy, reference, rm, prompts, config, it);
        run.policy = std::move(step.policy);
        run.diagnostics.push_back(step.diagnostics);
    }
    return run;
}

std::vector<PreferenceExample> pairwise_expand(const Tokens &prompt, const std::vector<Tokens> &answers,
                                               const std::vector<std::size_t> &ranking) {
    const std::size_t k = answers.size();
    if (k < 2) throw InvalidRanking("pairwise expansion needs K >= 2 answers");
    if (ranking.size() != k) throw InvalidRanking("ranking must order all " + std::to_string(k) + " answers");
    std::vector<bool> seen(k, false);
    for (auto r : ranking) {
        if (r >= k || seen[r]) throw InvalidRanking("ranking is not a permutation of the answers");
        seen[r] = true;
    }
    std::set<Tokens> distinct(answers.begin(), answers.end());
    if (distinct.size() != k) throw InvalidRanking("duplicate answers cannot be ranked against each other");
    std::vector<PreferenceExample> out;
    out.reserve(k * (k - 1) / 2);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) out.push_back({prompt, answers[ranking[i]], answers[ranking[j]]});
    return out;
}

std::vector<double> train_sft(PolicyModel &policy, std::span<const SftExample> dataset, double learning_rate,
                              std::size_t epochs) {
    std::vector<double> losses;
    for (std::size_t e = 0; e < epochs; ++e) {
        auto lg = sft_loss_and_grad(policy, dataset);
        losses.push_back(lg.loss);
        policy.add(lg.gradient, -learning_rate);
    }
    losses.push_back(sft_loss_and_grad(policy, dataset).loss);
    return losses;
}

std::vector<double> train_reward_model(RewardModel &rm, std::span<const PreferenceExample> dataset,
                                       double learning_rate, std::size_t epochs) {
    std::vector<double> losses;
    for (std::size_t e = 0; e < epochs; ++e) {
        auto lg = rm_loss_and_grad(rm, dataset);
        losses.push_back(lg.loss);
        auto w = rm.weights();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * lg.gradient[i];
    }
    losses.push_back(rm_loss_and_grad(rm, dataset).loss);
    return losses;
}

IterativeResult iterative_rlhf(PolicyModel policy, const ReferencePolicy &reference, RewardModel rm,
                               const std::vector<Tokens> &prompts, const Labeler &labeler,
                               const IterativeConfig &config) {
    if (config.answers_per_prompt < 2) throw InvalidInput("iterative RLHF needs K >= 2 answers per prompt");
    IterativeResult result{std::move(policy), std::move(rm), {}};
    std::vector<PreferenceExample> comparisons;
    for (std::size_t round = 0; round < config.rounds; ++round) {
        IterativeRound info;
        info.round = round;
        std::mt19937_64 rng(config.rl.seed ^ (0xD1B54A32D192ED03ULL * (round + 1)));
        for (const auto &x : prompts) {
            std::vector<Tokens> answers;
            std::set<Tokens> seen;
            for (std::size_t attempt = 0; attempt < 4 * config.answers_per_prompt &&
                                          answers.size() < config.answers_per_prompt;
                 ++attempt) {
                auto y = sample_answer(result.policy, x, config.rl.answer_length, rng);
                if (seen.insert(y).second) answers.push_back(std::move(y));
            }
            if (answers.size() < 2) continue;
            std::vector<std::size_t> ranking(answers.size());
            std::iota(ranking.begin(), ranking.end(), 0);
            std::vector<double> label(answers.size());
            for (std::size_t i = 0; i < answers.size(); ++i) label[i] = labeler(x, answers[i]);
            std::sort(ranking.begin(), ranking.end(), [&](std::size_t a, std::size_t b) {
                if (label[a] != label[b]) return label[a] > label[b];
                return answers[a] < answers[b];
            });
            auto pairs = pairwise_expand(x, answers, ranking);
            info.new_pairs += pairs.size();
            comparisons.insert(comparisons.end(), pairs.begin(), pairs.end());
        }
        if (!comparisons.empty()) {
            auto losses = train_reward_model(result.rm, comparisons, config.rm_learning_rate, config.rm_epochs);
            info.rm_loss = losses.back();
        }
        for (std::size_t it = 0; it < config.rl.iterations; ++it) {
            auto step = rlhf_step(result.policy, reference, result.rm, prompts, config.rl,
                                  round * config.rl.iterations + it);
            result.policy = std::move(step.policy);
            info.steps.push_back(step.diagnostics);
        }
        result.rounds.push_back(std::move(info));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using nlohmann::json;

template <typename Fn>
void for_each_json_line(std::istream &in, const std::string &source, Fn fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception &e) {
            throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
        try {
            fn(j);
        } catch (const json::exception &e) {
            throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const ParseError &e) {
            throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

Tokens tokens_of(const json &j, const char *key) {
    if (!j.contains(key)) throw ParseError(std::string("missing \"") + key + "\"");
    const auto &arr = j.at(key);
    if (!arr.is_array()) throw ParseError(std::string("\"") + key + "\" must be an array of integers");
    Tokens out;
    for (const auto &t : arr) {
        if (!t.is_number_integer()) throw ParseError(std::string("\"") + key + "\" must be an array of integers");
        out.push_back(t.get<int>());
    }
    return out;
}

} // namespace

std::vector<SftExample> read_sft_jsonl(std::istream &in, const std::string &source) {
    std::vector<SftExample> out;
    for_each_json_line(in, source, [&](const json &j) { out.push_back({tokens_of(j, "prompt"), tokens_of(j, "answer")}); });
    if (out.empty()) throw EmptyInput(source + ": no SFT examples");
    return out;
}

std::vector<PreferenceExample> read_preference_jsonl(std::istream &in, const std::string &source) {
    std::vector<PreferenceExample> out;
    for_each_json_line(in, source, [&](const json &j) {
        auto prompt = tokens_of(j, "prompt");
        if (j.contains("ranked")) {
            std::vector<Tokens> answers;
            for (const auto &a : j.at("ranked")) {
                json wrapper{{"a", a}};
                answers.push_back(tokens_of(wrapper, "a"));
            }
            std::vector<std::size_t> ranking(answers.size());
            std::iota(ranking.begin(), ranking.end(), 0);
            auto pairs = pairwise_expand(prompt, answers, ranking);
            out.insert(out.end(), pairs.begin(), pairs.end());
        } else {
            out.push_back({prompt, tokens_of(j, "chosen"), tokens_of(j, "rejected")});
        }
    });
    if (out.empty()) throw EmptyInput(source + ": no preference examples");
    return out;
}

std::vector<Tokens> read_prompt_jsonl(std::istream &in, const std::string &source) {
    std::vector<Tokens> out;
    for_each_json_line(in, source, [&](const json &j) { out.push_back(tokens_of(j, "prompt")); });
    if (out.empty()) throw EmptyInput(source + ": no prompts");
    return out;
}

void save_policy(std::ostream &out, const PolicyModel &policy) {
    nlohmann::ordered_json j;
    j["vocab_size"] = policy.vocab_size();
    j["context_length"] = policy.context_length();
    auto rows = nlohmann::ordered_json::array();
    for (const auto &[key, logits] : policy.table())
        rows.push_back({{"prompt", key.prompt}, {"prefix", key.prefix}, {"logits", logits}});
    j["rows"] = rows;
    out << j.dump() << '\n';
}

PolicyModel load_policy(std::istream &in, const std::string &source) {
    try {
        json j = json::parse(in);
        PolicyModel p(j.at("vocab_size").get<int>(), j.at("context_length").get<int>());
        for (const auto &row : j.at("rows")) {
            StateKey key{tokens_of(row, "prompt"), tokens_of(row, "prefix")};
            auto logits = row.at("logits").get<std::vector<double>>();
            if (logits.size() != static_cast<std::size_t>(p.vocab_size()))
                throw ParseError("logit row width differs from vocab_size");
            p.mutable_logits(key) = std::move(logits);
        }
        return p;
    } catch (const json::exception &e) {
        throw ParseError(source + ": " + e.what());
    }
}

void save_reward_model(std::ostream &out, const RewardModel &rm) {
    nlohmann::ordered_json j;
    j["vocab_size"] = rm.vocab_size();
    j["weights"] = std::vector<double>(rm.weights().begin(), rm.weights().end());
    out << j.dump() << '\n';
}

RewardModel load_reward_model(std::istream &in, const std::string &source) {
    try {
        json j = json::parse(in);
        RewardModel rm(j.at("vocab_size").get<int>());
        auto w = j.at("weights").get<std::vector<double>>();
        if (w.size() != rm.weights().size()) throw ParseError(source + ": weight count does not match vocab_size");
        std::copy(w.begin(), w.end(), rm.weights().begin());
        return rm;
    } catch (const json::exception &e) {
        throw ParseError(source + ": " + e.what());
    }
}

void write_loss_csv(std::ostream &out, std::span<const double> losses) {
    csv::write_row(out, {"iteration", "loss"});
    for (std::size_t i = 0; i < losses.size(); ++i) csv::write_row(out, {std::to_string(i), format_double(losses[i])});
}

void write_step_csv(std::ostream &out, std::span<const StepDiagnostics> steps) {
    csv::write_row(out, {"iteration", "mean_reward", "mean_score", "mean_kl", "exact_kl", "clip_fraction",
                         "penalized_score"});
    for (const auto &s : steps)
        csv::write_row(out, {std::to_string(s.iteration), format_double(s.mean_reward), format_double(s.mean_score),
                             format_double(s.mean_kl), format_double(s.exact_kl), format_double(s.clip_fraction),
                             format_double(s.penalized_score)});
}

} // namespace breedkit::prefopt
