#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "redus/data.hpp"
#include "redus/nn.hpp"
#include "redus/resampler.hpp"
#include "redus/trainer.hpp"

namespace redus::fed {

/// Disjoint client shards; each shard's indices are ascending.
struct PartitionPlan {
  std::vector<std::vector<std::size_t>> shards;

  std::size_t clients() const { return shards.size(); }
};

/// Shuffles 0..n-1 and deals the indices round-robin into K shards, so sizes
/// differ by at most one.
PartitionPlan partition_iid(std::size_t n, std::size_t clients, RngStream& rng);
PartitionPlan partition_iid(const data::Dataset& data, std::size_t clients, RngStream& rng);

struct ClientState {
  std::size_t client_id = 0;
  data::Dataset local_data;
  train::TrainConfig config;
  nn::MLPModel model;
  std::vector<train::TrainingReport> history;  // one per round
  resample::SampleWeightTable weights;         // only kept when weights persist
};

/// Copies the global model, trains it locally with adaptive resampling under
/// the seed derived for (master_seed, client, round), and records the report.
/// With `reset_weights` the sample weights restart from uniform.
void local_train(ClientState& state, const nn::MLPModel& global_model, std::uint64_t master_seed,
                 std::size_t round, bool reset_weights = true);

/// Unweighted elementwise mean, computed as first + sum_k (m_k - first) / K in
/// the given order.
nn::MLPModel fedavg_aggregate(std::span<const nn::MLPModel> models);

struct ClientUpload {
  std::size_t client_id = 0;
  nn::MLPModel model;
};

/// Sorts by client_id before averaging so arrival order does not matter.
nn::MLPModel fedavg_aggregate(std::vector<ClientUpload> uploads);

struct FederatedConfig {
  std::size_t clients = 5;
  std::size_t rounds = 50;
  train::TrainConfig local;  // local.seed is the master seed
  std::vector<nn::LayerSpec> layers;
  bool reset_weights = true;
  std::size_t jobs = 1;
};

struct ClientRoundMetrics {
  std::size_t client_id = 0;
  std::vector<std::size_t> included_samples_per_epoch;
  std::size_t backprops = 0;
  double wall_time_s = 0.0;
};

struct RoundMetrics {
  std::size_t round = 0;  // 1-based
  double global_accuracy = 0.0;
  double global_loss = 0.0;
  std::vector<ClientRoundMetrics> per_client;
  double client_wall_time_sum_s = 0.0;
};

struct FederatedRun {
  PartitionPlan partition;
  std::vector<nn::MLPModel> global_models;  // snapshot after each round
  std::vector<RoundMetrics> rounds;
};

/// Broadcast, local training on every client, aggregation, server evaluation;
/// repeated for cfg.rounds rounds.
FederatedRun run_rounds(const data::Dataset& train_data, const data::Dataset& test_data,
                        const FederatedConfig& cfg);

}  // namespace redus::fed
