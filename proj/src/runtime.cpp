// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0

#include "diffharness/runtime.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <fmt/format.h>
#include <mutex>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "diffharness/asm.hpp"
#include "diffharness/error.hpp"

namespace diffharness {

namespace {

class Fd {
  public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() { reset(); }

    int get() const { return fd_; }
    void assign(int fd)
    {
        reset();
        fd_ = fd;
    }
    void reset()
    {
        if (fd_ >= 0) {
            ::close(fd_);
        }
        fd_ = -1;
    }

  private:
    int fd_ = -1;
};

void
_make_pipe(Fd& read_end, Fd& write_end)
{
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) {
        throw Error(Errc::SpawnFailure, fmt::format("pipe: {}", std::strerror(errno)));
    }
    read_end.assign(fds[0]);
    write_end.assign(fds[1]);
}

std::string
_trim(std::string s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.pop_back();
    }
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) {
        ++i;
    }
    return s.substr(i);
}

std::optional<std::uint64_t>
_parse_hex_result(const std::string& text)
{
    const std::string t = _trim(text);
    if (t.size() < 3 || t.size() > 18 || t[0] != '0' || (t[1] != 'x' && t[1] != 'X')) {
        return std::nullopt;
    }
    std::uint64_t v = 0;
    for (std::size_t i = 2; i < t.size(); ++i) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(t[i])));
        int d;
        if (c >= '0' && c <= '9') {
            d = c - '0';
        } else if (c >= 'a' && c <= 'f') {
            d = c - 'a' + 10;
        } else {
            return std::nullopt;
        }
        v = (v << 4) | static_cast<std::uint64_t>(d);
    }
    return v;
}

} // namespace

ExecutionResponse
run_external_plugin(
    const std::filesystem::path& plugin,
    std::span<const std::uint8_t> program_bytes,
    std::span<const std::uint8_t> mem,
    std::chrono::milliseconds timeout)
{
    static std::once_flag sigpipe_once;
    std::call_once(sigpipe_once, [] { std::signal(SIGPIPE, SIG_IGN); });

    const std::string path = plugin.string();
    if (::access(path.c_str(), X_OK) != 0) {
        throw Error(Errc::PluginNotFound, fmt::format("plugin '{}' is missing or not executable", path));
    }

    const std::string input = to_hex(program_bytes) + "\n" + to_hex(mem) + "\n";

    Fd in_r, in_w, out_r, out_w, err_r, err_w, exec_r, exec_w;
    _make_pipe(in_r, in_w);
    _make_pipe(out_r, out_w);
    _make_pipe(err_r, err_w);
    _make_pipe(exec_r, exec_w);

    std::vector<char> arg0(path.begin(), path.end());
    arg0.push_back('\0');
    char* argv[] = {arg0.data(), nullptr};

    const pid_t pid = ::fork();
    if (pid < 0) {
        throw Error(Errc::SpawnFailure, fmt::format("fork: {}", std::strerror(errno)));
    }
    if (pid == 0) {
        ::dup2(in_r.get(), STDIN_FILENO);
        ::dup2(out_w.get(), STDOUT_FILENO);
        ::dup2(err_w.get(), STDERR_FILENO);
        ::signal(SIGPIPE, SIG_DFL);
        ::execv(argv[0], argv);
        const int err = errno;
        [[maybe_unused]] auto n = ::write(exec_w.get(), &err, sizeof err);
        ::_exit(127);
    }
    in_r.reset();
    out_w.reset();
    err_w.reset();
    exec_w.reset();

    int exec_errno = 0;
    if (::read(exec_r.get(), &exec_errno, sizeof exec_errno) == sizeof exec_errno) {
        ::waitpid(pid, nullptr, 0);
        throw Error(Errc::SpawnFailure, fmt::format("exec '{}': {}", path, std::strerror(exec_errno)));
    }

    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::string out, err;
    std::size_t written = 0;
    ::fcntl(in_w.get(), F_SETFL, O_NONBLOCK);
    bool timed_out = false;
    bool out_open = true, err_open = true;
    while (out_open || err_open) {
        pollfd fds[3];
        nfds_t n = 0;
        int out_idx = -1, err_idx = -1, in_idx = -1;
        if (out_open) {
            out_idx = static_cast<int>(n);
            fds[n++] = {out_r.get(), POLLIN, 0};
        }
        if (err_open) {
            err_idx = static_cast<int>(n);
            fds[n++] = {err_r.get(), POLLIN, 0};
        }
        if (in_w.get() >= 0) {
            in_idx = static_cast<int>(n);
            fds[n++] = {in_w.get(), POLLOUT, 0};
        }
        const auto remaining =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) {
            timed_out = true;
            break;
        }
        const int ready = ::poll(fds, n, static_cast<int>(remaining.count()));
        if (ready < 0) {
            if (errno == EINTR) {
                continue;
            }
            break;
        }
        if (ready == 0) {
            timed_out = true;
            break;
        }
        char buf[4096];
        auto drain = [&](int idx, const Fd& fd, std::string& sink, bool& open) {
            if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR))) {
                return;
            }
            const ssize_t got = ::read(fd.get(), buf, sizeof buf);
            if (got > 0) {
                sink.append(buf, static_cast<std::size_t>(got));
            } else if (got == 0 || errno != EINTR) {
                open = false;
            }
        };
        drain(out_idx, out_r, out, out_open);
        drain(err_idx, err_r, err, err_open);
        if (in_idx >= 0 && (fds[in_idx].revents & (POLLOUT | POLLERR | POLLHUP))) {
            const ssize_t put = ::write(in_w.get(), input.data() + written, input.size() - written);
            if (put > 0) {
                written += static_cast<std::size_t>(put);
            }
            if (put < 0 && errno != EAGAIN && errno != EINTR) {
                in_w.reset();
            } else if (written == input.size()) {
                in_w.reset();
            }
        }
    }
    in_w.reset();

    int status = 0;
    if (timed_out) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        return Timeout{};
    }
    // Output closed; the process may still be running (e.g. it closed stdout
    // early), so keep honouring the deadline.
    while (true) {
        const pid_t done = ::waitpid(pid, &status, WNOHANG);
        if (done == pid) {
            break;
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            return Timeout{};
        }
        ::usleep(1000);
    }

    if (WIFSIGNALED(status)) {
        return PluginCrash{fmt::format("terminated by signal {}", WTERMSIG(status))};
    }
    const int code = WEXITSTATUS(status);
    if (code != 0) {
        return RuntimeError{code, _trim(err)};
    }
    if (auto v = _parse_hex_result(out)) {
        return Returned{*v};
    }
    return PluginCrash{fmt::format("unparseable output '{}'", _trim(out))};
}

RuntimeSpec
parse_runtime_spec(std::string_view spec)
{
    const auto eq = spec.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw Error(Errc::UnknownRuntime, fmt::format("runtime '{}' is not of the form <id>=<kind>:<target>", spec));
    }
    RuntimeSpec out;
    out.id = std::string(spec.substr(0, eq));
    const auto target = spec.substr(eq + 1);
    if (target.starts_with("builtin:")) {
        const auto name = target.substr(8);
        auto profile = builtin_profile(name);
        if (!profile) {
            throw Error(Errc::UnknownRuntime, fmt::format("unknown builtin profile '{}'", name));
        }
        out.target = *profile;
    } else if (target.starts_with("plugin:") && target.size() > 7) {
        out.target = PluginRuntime{std::filesystem::path(target.substr(7))};
    } else {
        throw Error(
            Errc::UnknownRuntime, fmt::format("runtime target '{}' must be builtin:<profile> or plugin:<path>", target));
    }
    return out;
}

ExecutionResponse
execute(
    const RuntimeSpec& runtime,
    const Program& program,
    std::span<const std::uint8_t> mem,
    std::chrono::milliseconds timeout)
{
    if (const auto* profile = std::get_if<SemanticsProfile>(&runtime.target)) {
        return interpret(program, mem, *profile);
    }
    const auto& plugin = std::get<PluginRuntime>(runtime.target);
    try {
        return run_external_plugin(plugin.path, encode(program), mem, timeout);
    } catch (const Error& e) {
        return PluginCrash{e.what()};
    }
}

} // namespace diffharness
