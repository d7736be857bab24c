#include "nahid/segbackend.hpp"

#include "nahid/error.hpp"
#include "nahid/seeding.hpp"

#include <nlohmann/json.hpp>

#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <set>
#include <thread>

extern char** environ;

namespace nahid {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

std::string dims(std::size_t w, std::size_t h) { return std::to_string(w) + "x" + std::to_string(h); }

std::string substitute(std::string text, const std::string& token, const std::string& value) {
    for (std::size_t at = text.find(token); at != std::string::npos; at = text.find(token, at + value.size())) {
        text.replace(at, token.size(), value);
    }
    return text;
}

/// Owns a file descriptor.
class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() { reset(); }

    int get() const noexcept { return fd_; }
    void reset() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

[[noreturn]] void process_failure(const std::string& what) {
    throw Error(ErrorCode::BackendProcessFailure, what);
}

Bytes run_process(const std::string& command, const Bytes& input) {
    int sock[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sock) != 0) {
        process_failure(std::string("socketpair: ") + std::strerror(errno));
    }
    Fd in_parent(sock[0]), in_child(sock[1]);
    int pipefd[2];
    if (::pipe2(pipefd, O_CLOEXEC) != 0) process_failure(std::string("pipe: ") + std::strerror(errno));
    Fd out_parent(pipefd[0]), out_child(pipefd[1]);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_child.get(), STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_child.get(), STDOUT_FILENO);
    const char* argv[] = {"sh", "-c", command.c_str(), nullptr};
    pid_t pid = 0;
    const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) process_failure(std::string("spawn: ") + std::strerror(rc));
    in_child.reset();
    out_child.reset();

    // MSG_NOSIGNAL: a child that never reads stdin yields EPIPE, not SIGPIPE.
    std::jthread writer([&in_parent, &input] {
        std::size_t sent = 0;
        while (sent < input.size()) {
            const ssize_t n = ::send(in_parent.get(), input.data() + sent, input.size() - sent, MSG_NOSIGNAL);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) break;
            sent += static_cast<std::size_t>(n);
        }
        ::shutdown(in_parent.get(), SHUT_WR);
    });

    Bytes output;
    std::uint8_t buf[1 << 16];
    for (;;) {
        const ssize_t n = ::read(out_parent.get(), buf, sizeof buf);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        output.insert(output.end(), buf, buf + n);
    }
    writer.join();

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0) {
        if (errno != EINTR) process_failure(std::string("waitpid: ") + std::strerror(errno));
    }
    if (!WIFEXITED(status)) process_failure("backend process terminated by a signal");
    if (WEXITSTATUS(status) != 0) {
        process_failure("backend process exited with status " + std::to_string(WEXITSTATUS(status)));
    }
    return output;
}

ProbMap checked_output(const RawPmap& raw, const BackendDescriptor& desc) {
    if (raw.width != desc.input_size || raw.height != desc.input_size || raw.num_classes != desc.channels()) {
        throw Error(ErrorCode::SizeMismatch,
                    "map is " + dims(raw.width, raw.height) + "x" + std::to_string(raw.num_classes) +
                        " but model expects " + dims(desc.input_size, desc.input_size) + "x" +
                        std::to_string(desc.channels()));
    }
    return sanitize_probabilities(raw.width, raw.height, raw.num_classes, raw.values);
}

ProbMap infer_oracle(const SyntheticOracle& p, const BackendDescriptor& desc, const GrayImage& frame,
                     const LabelImage* truth) {
    if (truth == nullptr) invalid("synthetic_oracle needs the ground-truth labels");
    if (truth->width() != frame.width() || truth->height() != frame.height()) {
        throw Error(ErrorCode::SizeMismatch, "truth is " + dims(truth->width(), truth->height()) +
                                                 " but frame is " + dims(frame.width(), frame.height()));
    }
    if (truth->num_classes() != desc.label_count()) {
        throw Error(ErrorCode::SizeMismatch, "truth has " + std::to_string(truth->num_classes()) +
                                                 " classes but the model has " +
                                                 std::to_string(desc.label_count()));
    }
    const ProbMap full = corrupt(*truth, p.noise, derive_seed(p.seed, frame_hash(frame)));
    if (!desc.binary()) return full;
    std::vector<float> fg(full.width() * full.height());
    for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = full.pixel(i)[1];
    return sanitize_probabilities(full.width(), full.height(), 1, std::move(fg));
}

NoiseSpec noise_from_json(const nlohmann::json& j) {
    NoiseSpec n;
    n.mode = noise_mode_from_string(j.value("mode", std::string("iid_flip")));
    n.p = j.value("p", 0.0);
    n.band = j.value("band", 1u);
    return n;
}

nlohmann::json noise_to_json(const NoiseSpec& n) {
    return {{"mode", to_string(n.mode)}, {"p", n.p}, {"band", n.band}};
}

} // namespace

SituationId::SituationId(std::string id) : id_(std::move(id)) {
    if (id_.empty()) invalid("situation id must be non-empty");
}

std::string BackendDescriptor::kind() const {
    switch (params.index()) {
    case 0: return "file_backed";
    case 1: return "synthetic_oracle";
    default: return "external_process";
    }
}

void BackendDescriptor::validate() const {
    if (input_size == 0) invalid("input_size must be positive");
    if (classes.empty()) invalid("a model needs at least one class");
    std::set<std::string> seen;
    for (const auto& c : classes) {
        if (c.empty()) invalid("class names must be non-empty");
        if (!seen.insert(c).second) invalid("duplicate class name '" + c + "'");
    }
    if (const auto* f = std::get_if<FileBacked>(&params); f && f->directory.empty()) {
        invalid("file_backed needs a directory");
    }
    if (const auto* s = std::get_if<SyntheticOracle>(&params)) s->noise.validate();
    if (const auto* e = std::get_if<ExternalProcess>(&params); e && e->command.empty()) {
        invalid("external_process needs a command");
    }
}

void ModelRegistry::add(const SituationId& id, BackendDescriptor desc) {
    desc.validate();
    if (contains(id)) invalid("situation '" + id.str() + "' registered twice");
    entries_.emplace(id, std::move(desc));
}

const BackendDescriptor& ModelRegistry::resolve(const SituationId& id) const {
    const auto it = entries_.find(id);
    if (it == entries_.end()) {
        throw Error(ErrorCode::ModelNotFound, "no model registered for situation '" + id.str() + "'");
    }
    return it->second;
}

std::vector<SituationId> ModelRegistry::situations() const {
    std::vector<SituationId> out;
    for (const auto& [id, _] : entries_) out.push_back(id);
    return out;
}

ModelRegistry ModelRegistry::from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    try {
        if (doc.at("version").get<int>() != 1) invalid("unsupported registry version");
        ModelRegistry reg;
        for (const auto& [name, e] : doc.at("situations").items()) {
            BackendDescriptor d;
            d.input_size = e.at("input_size").get<std::size_t>();
            d.classes = e.at("classes").get<std::vector<std::string>>();
            const auto kind = e.at("kind").get<std::string>();
            const nlohmann::json params = e.value("params", nlohmann::json::object());
            if (kind == "file_backed") {
                std::filesystem::path dir = params.at("directory").get<std::string>();
                if (dir.is_relative() && !base_dir.empty()) dir = base_dir / dir;
                d.params = FileBacked{dir};
            } else if (kind == "synthetic_oracle") {
                d.params = SyntheticOracle{noise_from_json(params.value("noise", nlohmann::json::object())),
                                           params.at("seed").get<std::uint64_t>()};
            } else if (kind == "external_process") {
                d.params = ExternalProcess{params.at("command").get<std::string>()};
            } else {
                invalid("unknown backend kind '" + kind + "'");
            }
            reg.add(SituationId(name), std::move(d));
        }
        return reg;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedFile, std::string("registry: ") + e.what());
    }
}

nlohmann::json ModelRegistry::to_json() const {
    nlohmann::json situations = nlohmann::json::object();
    for (const auto& [id, d] : entries_) {
        nlohmann::json params;
        if (const auto* f = std::get_if<FileBacked>(&d.params)) {
            params = {{"directory", f->directory.string()}};
        } else if (const auto* s = std::get_if<SyntheticOracle>(&d.params)) {
            params = {{"noise", noise_to_json(s->noise)}, {"seed", s->seed}};
        } else {
            params = {{"command", std::get<ExternalProcess>(d.params).command}};
        }
        situations[id.str()] = {
            {"kind", d.kind()}, {"input_size", d.input_size}, {"classes", d.classes}, {"params", params}};
    }
    return {{"version", 1}, {"situations", situations}};
}

ModelRegistry ModelRegistry::load(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedFile, path.string() + ": " + e.what());
    }
    return from_json(doc, path.parent_path());
}

void ModelRegistry::save(const std::filesystem::path& path) const { write_text(path, to_json().dump(2) + "\n"); }

std::uint64_t frame_hash(const GrayImage& frame) { return fnv1a64(encode_pgm(frame)); }

std::filesystem::path precomputed_path(const std::filesystem::path& directory, const GrayImage& frame) {
    return directory / (hex64(frame_hash(frame)) + ".pmap");
}

ProbMap infer(const BackendDescriptor& desc, const GrayImage& frame, const LabelImage* truth) {
    if (frame.width() != desc.input_size || frame.height() != desc.input_size) {
        throw Error(ErrorCode::SizeMismatch, "frame is " + dims(frame.width(), frame.height()) +
                                                 " but model input is " +
                                                 dims(desc.input_size, desc.input_size));
    }
    if (const auto* s = std::get_if<SyntheticOracle>(&desc.params)) return infer_oracle(*s, desc, frame, truth);

    if (const auto* f = std::get_if<FileBacked>(&desc.params)) {
        const auto path = precomputed_path(f->directory, frame);
        if (!std::filesystem::is_regular_file(path)) {
            throw Error(ErrorCode::MissingPrecomputedMap, "no precomputed map " + path.string());
        }
        return checked_output(decode_pmap_raw(read_file(path)), desc);
    }

    const auto& e = std::get<ExternalProcess>(desc.params);
    std::string command = substitute(e.command, "{input_size}", std::to_string(desc.input_size));
    command = substitute(command, "{channels}", std::to_string(desc.channels()));
    const Bytes out = run_process(command, encode_pgm(frame));
    RawPmap raw;
    try {
        raw = decode_pmap_raw(out);
    } catch (const Error& err) {
        process_failure(std::string("malformed backend output: ") + err.what());
    }
    try {
        return checked_output(raw, desc);
    } catch (const Error& err) {
        process_failure(std::string("unusable backend output: ") + err.what());
    }
}

} // namespace nahid
