#include "redus/federated.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <numeric>
#include <thread>

#include "redus/errors.hpp"

namespace redus::fed {

PartitionPlan partition_iid(std::size_t n, std::size_t clients, RngStream& rng) {
  if (clients == 0) throw ConfigError("need at least one client");
  if (clients > n) {
    throw ConfigError("cannot split " + std::to_string(n) + " samples across " +
                      std::to_string(clients) + " clients");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  PartitionPlan plan;
  plan.shards.resize(clients);
  for (std::size_t k = 0; k < n; ++k) plan.shards[k % clients].push_back(order[k]);
  for (auto& shard : plan.shards) std::sort(shard.begin(), shard.end());
  return plan;
}

PartitionPlan partition_iid(const data::Dataset& data, std::size_t clients, RngStream& rng) {
  return partition_iid(data.size(), clients, rng);
}

void local_train(ClientState& state, const nn::MLPModel& global_model, std::uint64_t master_seed,
                 std::size_t round, bool reset_weights) {
  if (!state.model.params.empty() && !state.model.same_shape(global_model)) {
    throw ConfigError("client " + std::to_string(state.client_id) +
                      " model shape differs from the global model");
  }
  train::TrainConfig cfg = state.config;
  cfg.mode = train::TrainMode::redus;
  cfg.seed = derive_client_seed(master_seed, state.client_id, round);
  if (reset_weights) state.weights = {};
  auto result = train::train_redus(global_model, state.local_data, cfg,
                                   reset_weights ? nullptr : &state.weights);
  state.model = std::move(result.model);
  state.history.push_back(std::move(result.report));
}

nn::MLPModel fedavg_aggregate(std::span<const nn::MLPModel> models) {
  if (models.empty()) throw ConfigError("aggregation needs at least one model");
  const nn::MLPModel& first = models.front();
  for (const auto& m : models) {
    if (!m.same_shape(first)) throw ConfigError("aggregation inputs differ in shape");
  }
  nn::MLPModel out = first;
  if (models.size() == 1) return out;
  const double k = static_cast<double>(models.size());
  for (std::size_t layer = 0; layer < out.params.size(); ++layer) {
    auto& w = out.params[layer].weights.values;
    auto& b = out.params[layer].bias;
    const auto& w0 = first.params[layer].weights.values;
    const auto& b0 = first.params[layer].bias;
    std::vector<double> dw(w.size(), 0.0);
    std::vector<double> db(b.size(), 0.0);
    for (std::size_t m = 1; m < models.size(); ++m) {
      const auto& wm = models[m].params[layer].weights.values;
      const auto& bm = models[m].params[layer].bias;
      for (std::size_t i = 0; i < w.size(); ++i) dw[i] += wm[i] - w0[i];
      for (std::size_t i = 0; i < b.size(); ++i) db[i] += bm[i] - b0[i];
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = w0[i] + dw[i] / k;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = b0[i] + db[i] / k;
  }
  return out;
}

nn::MLPModel fedavg_aggregate(std::vector<ClientUpload> uploads) {
  std::sort(uploads.begin(), uploads.end(),
            [](const ClientUpload& a, const ClientUpload& b) { return a.client_id < b.client_id; });
  std::vector<nn::MLPModel> models;
  models.reserve(uploads.size());
  for (auto& u : uploads) models.push_back(std::move(u.model));
  return fedavg_aggregate(std::span<const nn::MLPModel>(models));
}

FederatedRun run_rounds(const data::Dataset& train_data, const data::Dataset& test_data,
                        const FederatedConfig& cfg) {
  if (cfg.rounds == 0) throw ConfigError("rounds must be positive");
  if (test_data.empty()) throw ConfigError("server test set is empty");
  nn::validate_specs(cfg.layers);
  const std::uint64_t master = cfg.local.seed;

  FederatedRun run;
  RngStream partition_rng(master, "partition");
  run.partition = partition_iid(train_data, cfg.clients, partition_rng);

  std::vector<ClientState> clients(cfg.clients);
  for (std::size_t c = 0; c < cfg.clients; ++c) {
    clients[c].client_id = c;
    clients[c].local_data = train_data.subset(run.partition.shards[c]);
    clients[c].config = cfg.local;
    clients[c].config.validate(clients[c].local_data.size());
  }

  RngStream init_rng(master, "init");
  nn::MLPModel global = nn::init_model(cfg.layers, init_rng);

  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    if (cfg.jobs <= 1) {
      for (auto& c : clients) local_train(c, global, master, r, cfg.reset_weights);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::exception_ptr> errors(clients.size());
      std::vector<std::thread> workers;
      for (std::size_t w = 0; w < std::min(cfg.jobs, clients.size()); ++w) {
        workers.emplace_back([&] {
          for (std::size_t i = next++; i < clients.size(); i = next++) {
            try {
              local_train(clients[i], global, master, r, cfg.reset_weights);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
      }
      for (auto& w : workers) w.join();
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }

    std::vector<ClientUpload> uploads;
    uploads.reserve(clients.size());
    RoundMetrics metrics;
    metrics.round = r + 1;
    for (const auto& c : clients) {
      uploads.push_back({c.client_id, c.model});
      const auto& report = c.history.back();
      ClientRoundMetrics cm;
      cm.client_id = c.client_id;
      for (const auto& e : report.epochs) cm.included_samples_per_epoch.push_back(e.included_samples);
      cm.backprops = report.total_backprops;
      cm.wall_time_s = report.total_wall_time_s;
      metrics.client_wall_time_sum_s += cm.wall_time_s;
      metrics.per_client.push_back(std::move(cm));
    }
    global = fedavg_aggregate(std::move(uploads));
    const auto eval = train::evaluate(global, test_data);
    metrics.global_accuracy = eval.accuracy;
    metrics.global_loss = eval.mean_loss;
    run.rounds.push_back(std::move(metrics));
    run.global_models.push_back(global);
  }
  return run;
}

}  // namespace redus::fed
