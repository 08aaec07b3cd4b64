#include "vipr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include "vipr/errors.hpp"
#include "vipr/log.hpp"

namespace vipr::nn {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMinQuatNorm = 1e-8;

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop = true; }

}  // namespace

torch::Tensor pose_loss(const torch::Tensor& pred_position, const torch::Tensor& pred_quaternion,
                        const torch::Tensor& target_position, const torch::Tensor& target_quaternion, double alpha,
                        double beta) {
    if (pred_position.sizes() != target_position.sizes() || pred_position.size(-1) != 3)
        throw ShapeError("pose_loss: position shapes differ or last dimension is not 3");
    if (pred_quaternion.sizes() != target_quaternion.sizes() || pred_quaternion.size(-1) != 4)
        throw ShapeError("pose_loss: quaternion shapes differ or last dimension is not 4");

    const auto position_term = torch::linalg_vector_norm(pred_position - target_position, 2, {-1});

    const auto target_norm = torch::linalg_vector_norm(target_quaternion, 2, {-1}, true).clamp_min(kMinQuatNorm);
    auto target_unit = target_quaternion / target_norm;
    const auto sign = torch::where((pred_quaternion * target_unit).sum(-1, true).detach() < 0, -1.0, 1.0)
                          .to(target_unit.dtype());
    target_unit = target_unit * sign;
    const auto rotation_term = torch::linalg_vector_norm(pred_quaternion - target_unit, 2, {-1});

    return (alpha * position_term + beta * rotation_term).mean();
}

std::int64_t count_parameters(const torch::nn::Module& module) {
    std::int64_t n = 0;
    for (const auto& p : module.parameters())
        if (p.requires_grad()) n += p.numel();
    return n;
}

nlohmann::json to_json(const TrainSettings& s) {
    return {{"learning_rate", s.learning_rate},
            {"final_lr_fraction", s.final_lr_fraction},
            {"batch_size", s.batch_size},
            {"epochs", s.epochs},
            {"seed", s.seed}};
}

void read_train_settings(const nlohmann::json& j, TrainSettings& s) {
    if (j.contains("learning_rate")) s.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("final_lr_fraction")) s.final_lr_fraction = j.at("final_lr_fraction").get<double>();
    if (j.contains("batch_size")) s.batch_size = j.at("batch_size").get<int>();
    if (j.contains("epochs")) s.epochs = j.at("epochs").get<int>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (!(s.learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
    if (s.batch_size <= 0) throw ArgumentError("batch_size must be positive");
    if (s.epochs <= 0) throw ArgumentError("epochs must be positive");
}

std::vector<EpochMetrics> run_training(std::vector<torch::Tensor> parameters, std::size_t sample_count,
                                       const TrainSettings& settings,
                                       const std::function<torch::Tensor(std::span<const std::int64_t>)>& batch_loss,
                                       const std::string& stage) {
    if (sample_count == 0) throw ArgumentError(stage + ": training set is empty");
    torch::optim::Adam optimizer(parameters, torch::optim::AdamOptions(settings.learning_rate));
    std::mt19937_64 rng(settings.seed);
    std::vector<std::int64_t> order(sample_count);
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochMetrics> history;
    const std::size_t batch = static_cast<std::size_t>(settings.batch_size);
    {
        // Epoch 0: mean loss of the untrained model over the whole set.
        torch::NoGradGuard guard;
        double sum = 0.0;
        for (std::size_t start = 0; start < sample_count; start += batch) {
            const std::size_t n = std::min(batch, sample_count - start);
            sum += batch_loss(std::span<const std::int64_t>(order.data() + start, n)).item<double>() *
                   static_cast<double>(n);
        }
        history.push_back({0, sum / static_cast<double>(sample_count), settings.learning_rate});
        log::info(stage, " epoch 0 loss ", history.back().loss);
    }
    for (int epoch = 0; epoch < settings.epochs; ++epoch) {
        // Cosine decay from learning_rate to learning_rate * final_lr_fraction.
        const double progress = settings.epochs > 1 ? static_cast<double>(epoch) / (settings.epochs - 1) : 0.0;
        const double lr = settings.learning_rate *
                          (settings.final_lr_fraction +
                           (1.0 - settings.final_lr_fraction) * 0.5 * (1.0 + std::cos(kPi * progress)));
        for (auto& group : optimizer.param_groups())
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < sample_count; start += batch) {
            const std::size_t n = std::min(batch, sample_count - start);
            const std::span<const std::int64_t> idx(order.data() + start, n);
            optimizer.zero_grad();
            auto loss = batch_loss(idx);
            const double value = loss.item<double>();
            if (!std::isfinite(value)) {
                std::ostringstream msg;
                msg << stage << ": non-finite loss at epoch " << epoch + 1 << ", batch starting at sample "
                    << start << " (" << n << " samples, first index " << idx[0] << ")";
                double grad_norm = 0.0;
                for (const auto& p : parameters)
                    if (p.grad().defined()) grad_norm += p.grad().pow(2).sum().item<double>();
                msg << "; previous gradient norm " << std::sqrt(grad_norm) << "; running mean loss "
                    << (seen ? sum / seen : 0.0);
                throw TrainingError(msg.str());
            }
            loss.backward();
            optimizer.step();
            sum += value * static_cast<double>(n);
            seen += n;
            if (stop_requested()) break;
        }
        history.push_back({epoch + 1, sum / static_cast<double>(seen), lr});
        log::info(stage, " epoch ", epoch + 1, "/", settings.epochs, " loss ", history.back().loss);
        if (stop_requested()) {
            log::warn(stage, ": interrupted after epoch ", epoch + 1);
            break;
        }
    }
    return history;
}

std::string format_metrics(const std::vector<EpochMetrics>& history) {
    std::ostringstream os;
    char buf[128];
    for (const auto& m : history) {
        if (m.epoch == 0)
            std::snprintf(buf, sizeof buf, "# initial %.9e %.6e\n", m.loss, m.learning_rate);
        else
            std::snprintf(buf, sizeof buf, "%d %.9e %.6e\n", m.epoch, m.loss, m.learning_rate);
        os << buf;
    }
    return os.str();
}

std::vector<EpochMetrics> parse_metrics(const std::string& text) {
    std::istringstream in(text);
    std::vector<EpochMetrics> out;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream row(line);
        EpochMetrics m;
        if (line.rfind("# initial ", 0) == 0) {
            std::string hash, tag;
            if (row >> hash >> tag >> m.loss >> m.learning_rate) out.push_back(m);
        } else if (!line.empty() && line[0] != '#') {
            if (row >> m.epoch >> m.loss >> m.learning_rate) out.push_back(m);
        }
    }
    return out;
}

void write_metrics_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& history) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write metrics log " + path.string());
    out << "# epoch loss learning_rate\n" << format_metrics(history);
}

void configure_runtime(std::uint64_t seed, bool deterministic) {
    torch::manual_seed(seed);
    if (deterministic) {
        at::set_num_threads(1);
        at::globalContext().setDeterministicAlgorithms(true, false);
    }
}

void request_stop() { g_stop = true; }
bool stop_requested() { return g_stop; }
void reset_stop() { g_stop = false; }
void install_interrupt_handler() { std::signal(SIGINT, on_sigint); }

std::string bytes_hash(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes_hash(bytes);
}

std::string fingerprint(const nlohmann::json& architecture) {
    const std::string s = architecture.dump();
    return bytes_hash({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     const torch::nn::Module& module) {
    torch::serialize::OutputArchive archive;
    module.save(archive);
    archive.write("vipr.kind", c10::IValue(header.kind));
    archive.write("vipr.config", c10::IValue(header.config.dump()));
    archive.write("vipr.fingerprint", c10::IValue(header.fingerprint));
    archive.write("vipr.metrics", c10::IValue(format_metrics(header.history)));
    try {
        archive.save_to(path.string());
    } catch (const c10::Error& e) {
        throw DataError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
}

namespace {

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key,
                        const std::filesystem::path& path) {
    c10::IValue v;
    if (!archive.try_read(key, v) || !v.isString())
        throw DependencyError(path.string() + ": not a checkpoint (missing '" + key + "')");
    return v.toStringRef();
}

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DependencyError("missing checkpoint " + path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw DependencyError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    return archive;
}

}  // namespace

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
    auto archive = open_archive(path);
    CheckpointHeader h;
    h.kind = read_string(archive, "vipr.kind", path);
    h.config = nlohmann::json::parse(read_string(archive, "vipr.config", path));
    h.fingerprint = read_string(archive, "vipr.fingerprint", path);
    h.history = parse_metrics(read_string(archive, "vipr.metrics", path));
    return h;
}

void load_checkpoint_state(const std::filesystem::path& path, const CheckpointHeader& expected,
                           torch::nn::Module& module) {
    auto archive = open_archive(path);
    const auto kind = read_string(archive, "vipr.kind", path);
    if (kind != expected.kind)
        throw DependencyError(path.string() + ": checkpoint holds a '" + kind + "' model, expected '" +
                              expected.kind + "'");
    const auto fp = read_string(archive, "vipr.fingerprint", path);
    if (fp != expected.fingerprint)
        throw DependencyError(path.string() + ": config fingerprint " + fp + " does not match " +
                              expected.fingerprint);
    try {
        module.load(archive);
    } catch (const c10::Error& e) {
        throw DependencyError(path.string() + ": incompatible weights: " + e.what_without_backtrace());
    }
}

}  // namespace vipr::nn
