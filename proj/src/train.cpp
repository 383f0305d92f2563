#include "wsol/train.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <thread>

#include "wsol/random.hpp"

namespace wsol {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must lie in [0,1)");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (threads < 1) throw ConfigError("train: threads must be >= 1");
}

void sgd_momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double mu) {
    if (param.shape() != grad.shape() || param.shape() != velocity.shape()) {
        throw DimensionError("sgd_momentum_step: parameter, gradient, and velocity shapes must match");
    }
    double* p = param.data();
    const double* g = grad.data();
    double* v = velocity.data();
    for (std::size_t i = 0; i < param.size(); ++i) {
        v[i] = mu * v[i] + g[i];
        p[i] -= lr * v[i];
    }
}

Trainer::Trainer(WsolNet& net, TrainConfig train_config, LossConfig loss_config)
    : net_(net), train_config_(train_config), loss_config_(loss_config) {
    train_config_.validate();
    loss_config_.validate();
    params_ = net_.named_parameters();
    for (const auto& [name, param] : params_) velocities_.emplace_back(param.shape());
}

std::vector<std::pair<std::string, Tensor>> Trainer::named_velocities() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < params_.size(); ++i) out.emplace_back(params_[i].first, velocities_[i]);
    return out;
}

void Trainer::set_velocity(const std::string& param_name, const Tensor& value) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].first == param_name) {
            if (velocities_[i].shape() != value.shape()) {
                throw DimensionError("set_velocity: shape mismatch for " + param_name);
            }
            std::copy(value.data(), value.data() + value.size(), velocities_[i].data());
            return;
        }
    }
    throw IndexError("set_velocity: unknown parameter " + param_name);
}

namespace {

struct SampleResult {
    std::vector<std::vector<double>> grads;  // aligned with the parameter list
    EpochStats stats;                        // single-sample term values
    std::string nan_term;
};

const char* first_nan_term(const LossBreakdown& b) {
    if (std::isnan(b.cls)) return "cls";
    if (std::isnan(b.cls_fg)) return "cls-fg";
    if (std::isnan(b.ae)) return "ae";
    if (std::isnan(b.ae_fg)) return "ae-fg";
    if (std::isnan(b.pseudo)) return "pseudo";
    if (std::isnan(b.bas)) return "bas";
    if (std::isnan(b.ac)) return "ac";
    if (std::isnan(b.total)) return "total";
    return nullptr;
}

}  // namespace

EpochStats Trainer::run_epoch(const Dataset& dataset) {
    if (dataset.samples.empty()) throw ContractError("run_epoch: dataset is empty");

    const std::size_t count = dataset.samples.size();
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    if (train_config_.shuffle) {
        // Portable Fisher-Yates; std::shuffle's draw sequence is
        // implementation-defined.
        Rng rng(splitmix64(static_cast<std::uint64_t>(train_config_.seed) ^
                           splitmix64(static_cast<std::uint64_t>(epoch_) + 1)));
        for (std::size_t i = count - 1; i > 0; --i) {
            const std::size_t j = rng.uniform_int(i + 1);
            std::swap(order[i], order[j]);
        }
    }

    EpochStats epoch_stats;
    epoch_stats.epoch = epoch_;

    const int S = dataset.image_size;
    auto evaluate_sample = [&](std::size_t sample_index, SampleResult& result) {
        const Sample& sample = dataset.samples[sample_index];
        Tape tape;
        Tensor image = Tensor::view({1, 3, S, S}, sample.image);
        ActivationBundle bundle = forward(net_, image, ClassSelect::GroundTruth, {sample.label});
        LossBreakdown breakdown = total_loss(bundle, {sample.label}, net_, loss_config_);
        if (const char* term = first_nan_term(breakdown)) {
            result.nan_term = term;
            return;
        }
        tape.backward(breakdown.total_tensor);
        result.grads.resize(params_.size());
        for (std::size_t p = 0; p < params_.size(); ++p) {
            Tensor g = tape.grad(params_[p].second);
            result.grads[p].assign(g.data(), g.data() + g.size());
        }
        result.stats.cls = breakdown.cls;
        result.stats.cls_fg = breakdown.cls_fg;
        result.stats.ae = breakdown.ae;
        result.stats.ae_fg = breakdown.ae_fg;
        result.stats.pseudo = breakdown.pseudo;
        result.stats.bas = breakdown.bas;
        result.stats.ac = breakdown.ac;
        result.stats.total = breakdown.total;
        result.stats.bas_skipped = breakdown.bas_skipped.empty() ? 0 : breakdown.bas_skipped[0];
    };

    for (std::size_t batch_start = 0; batch_start < count; batch_start += static_cast<std::size_t>(train_config_.batch_size)) {
        const std::size_t batch_end = std::min(count, batch_start + static_cast<std::size_t>(train_config_.batch_size));
        const std::size_t batch_count = batch_end - batch_start;

        std::vector<SampleResult> results(batch_count);
        const int workers = std::min<int>(train_config_.threads, static_cast<int>(batch_count));
        if (workers <= 1) {
            for (std::size_t b = 0; b < batch_count; ++b) evaluate_sample(order[batch_start + b], results[b]);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(workers));
            for (int w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    for (std::size_t b = static_cast<std::size_t>(w); b < batch_count; b += static_cast<std::size_t>(workers)) {
                        evaluate_sample(order[batch_start + b], results[b]);
                    }
                });
            }
            for (std::thread& t : pool) t.join();
        }

        // Deterministic reduction in sample index order.
        const double inv = 1.0 / static_cast<double>(batch_count);
        for (std::size_t b = 0; b < batch_count; ++b) {
            SampleResult& r = results[b];
            if (!r.nan_term.empty()) {
                throw NumericError("loss term '" + r.nan_term + "' became NaN at epoch " + std::to_string(epoch_) +
                                   ", sample " + std::to_string(order[batch_start + b]));
            }
            epoch_stats.cls += r.stats.cls;
            epoch_stats.cls_fg += r.stats.cls_fg;
            epoch_stats.ae += r.stats.ae;
            epoch_stats.ae_fg += r.stats.ae_fg;
            epoch_stats.pseudo += r.stats.pseudo;
            epoch_stats.bas += r.stats.bas;
            epoch_stats.ac += r.stats.ac;
            epoch_stats.total += r.stats.total;
            epoch_stats.bas_skipped += r.stats.bas_skipped;
        }
        for (std::size_t p = 0; p < params_.size(); ++p) {
            Tensor grad(params_[p].second.shape());
            double* g = grad.data();
            for (std::size_t b = 0; b < batch_count; ++b) {
                const std::vector<double>& gs = results[b].grads[p];
                for (std::size_t i = 0; i < gs.size(); ++i) g[i] += gs[i];
            }
            for (std::size_t i = 0; i < grad.size(); ++i) g[i] *= inv;
            sgd_momentum_step(params_[p].second, grad, velocities_[p], train_config_.learning_rate,
                              train_config_.momentum);
        }
    }

    const double inv_count = 1.0 / static_cast<double>(count);
    epoch_stats.cls *= inv_count;
    epoch_stats.cls_fg *= inv_count;
    epoch_stats.ae *= inv_count;
    epoch_stats.ae_fg *= inv_count;
    epoch_stats.pseudo *= inv_count;
    epoch_stats.bas *= inv_count;
    epoch_stats.ac *= inv_count;
    epoch_stats.total *= inv_count;
    ++epoch_;
    return epoch_stats;
}

std::vector<EpochStats> train(WsolNet& net, const Dataset& dataset, const TrainConfig& train_config,
                              const LossConfig& loss_config) {
    Trainer trainer(net, train_config, loss_config);
    std::vector<EpochStats> log;
    log.reserve(static_cast<std::size_t>(train_config.epochs));
    for (int e = 0; e < train_config.epochs; ++e) log.push_back(trainer.run_epoch(dataset));
    return log;
}

namespace {

constexpr char kMagic[4] = {'W', 'S', 'O', 'L'};
constexpr const char* kMetaName = "__meta__";

void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in, const char* field) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (in.gcount() != 4) throw IoError(std::string("checkpoint: truncated ") + field);
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

double get_f64(std::istream& in, const char* field) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (in.gcount() != 8) throw IoError(std::string("checkpoint: truncated ") + field);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

Tensor meta_tensor(const ModelConfig& model, int epoch) {
    return Tensor({7}, {static_cast<double>(model.input_size), static_cast<double>(model.num_classes),
                        static_cast<double>(model.feature_channels), static_cast<double>(model.feature_stride),
                        static_cast<double>(model.backbone_blocks), static_cast<double>(model.seed),
                        static_cast<double>(epoch)});
}

}  // namespace

Checkpoint make_checkpoint(const WsolNet& net) {
    Checkpoint checkpoint;
    checkpoint.model = net.config();
    checkpoint.tensors = net.named_parameters();
    for (const auto& [name, param] : net.named_parameters()) {
        checkpoint.tensors.emplace_back(name + ".m", Tensor(param.shape()));
    }
    return checkpoint;
}

Checkpoint make_checkpoint(const Trainer& trainer) {
    Checkpoint checkpoint;
    checkpoint.model = trainer.net().config();
    checkpoint.epoch = trainer.epoch();
    checkpoint.tensors = trainer.net().named_parameters();
    for (const auto& [name, velocity] : trainer.named_velocities()) {
        checkpoint.tensors.emplace_back(name + ".m", velocity);
    }
    return checkpoint;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
    out.write(kMagic, 4);
    put_u32(out, checkpoint.version);
    put_u32(out, static_cast<std::uint32_t>(checkpoint.tensors.size()) + 1);

    auto put_tensor = [&out](const std::string& name, const Tensor& tensor) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (int d = 0; d < tensor.rank(); ++d) put_u32(out, static_cast<std::uint32_t>(tensor.dim(d)));
        for (std::size_t i = 0; i < tensor.size(); ++i) put_f64(out, tensor.data()[i]);
    };
    put_tensor(kMetaName, meta_tensor(checkpoint.model, checkpoint.epoch));
    for (const auto& [name, tensor] : checkpoint.tensors) put_tensor(name, tensor);
    if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("load_checkpoint: bad magic in " + path.string());
    }
    Checkpoint checkpoint;
    checkpoint.version = get_u32(in, "version");
    if (checkpoint.version != 1) {
        throw IoError("load_checkpoint: unsupported version " + std::to_string(checkpoint.version));
    }
    const std::uint32_t tensor_count = get_u32(in, "tensor count");

    bool have_meta = false;
    for (std::uint32_t t = 0; t < tensor_count; ++t) {
        const std::uint32_t name_len = get_u32(in, "name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len)) throw IoError("checkpoint: truncated name");
        const std::uint32_t rank = get_u32(in, "rank");
        std::vector<int> shape;
        std::size_t size = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = get_u32(in, "dimension");
            if (dim == 0) throw IoError("checkpoint: zero dimension in tensor " + name);
            shape.push_back(static_cast<int>(dim));
            size *= dim;
        }
        Tensor tensor(shape);
        for (std::size_t i = 0; i < size; ++i) tensor.data()[i] = get_f64(in, "tensor data");

        if (name == kMetaName) {
            if (tensor.size() != 7) throw IoError("checkpoint: malformed metadata tensor");
            checkpoint.model.input_size = static_cast<int>(tensor.data()[0]);
            checkpoint.model.num_classes = static_cast<int>(tensor.data()[1]);
            checkpoint.model.feature_channels = static_cast<int>(tensor.data()[2]);
            checkpoint.model.feature_stride = static_cast<int>(tensor.data()[3]);
            checkpoint.model.backbone_blocks = static_cast<int>(tensor.data()[4]);
            checkpoint.model.seed = static_cast<std::uint32_t>(tensor.data()[5]);
            checkpoint.epoch = static_cast<int>(tensor.data()[6]);
            have_meta = true;
        } else {
            checkpoint.tensors.emplace_back(std::move(name), std::move(tensor));
        }
    }
    if (!have_meta) throw IoError("load_checkpoint: missing metadata tensor");
    return checkpoint;
}

WsolNet restore_net(const Checkpoint& checkpoint) {
    WsolNet net(checkpoint.model);
    for (const auto& [name, tensor] : checkpoint.tensors) {
        if (name.size() > 2 && name.ends_with(".m")) continue;
        net.set_parameter(name, tensor);
    }
    return net;
}

void restore_trainer(Trainer& trainer, const Checkpoint& checkpoint) {
    trainer.set_epoch(checkpoint.epoch);
    for (const auto& [name, tensor] : checkpoint.tensors) {
        if (name.size() > 2 && name.ends_with(".m")) {
            trainer.set_velocity(name.substr(0, name.size() - 2), tensor);
        }
    }
}

void write_train_log(const std::vector<EpochStats>& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_train_log: cannot open " + path.string());
    out << "epoch cls cls_fg ae ae_fg pseudo bas ac total bas_skipped\n";
    char line[256];
    for (const EpochStats& e : log) {
        std::snprintf(line, sizeof(line), "%d %.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f %d\n", e.epoch, e.cls, e.cls_fg,
                      e.ae, e.ae_fg, e.pseudo, e.bas, e.ac, e.total, e.bas_skipped);
        out << line;
    }
    if (!out) throw IoError("write_train_log: write failed for " + path.string());
}

}  // namespace wsol
