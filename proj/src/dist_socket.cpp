#include "hepml/dist/socket.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "hepml/common.hpp"

namespace hepml::dist {
namespace {

[[noreturn]] void raise_errno(const std::string& what) {
  throw ProtocolError("socket", what + ": " + std::strerror(errno));
}

void set_no_delay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

Socket::~Socket() { close(); }

Socket::Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown_both() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::send_all(const void* data, size_t n) {
  const auto* p = static_cast<const uint8_t*>(data);
  while (n > 0) {
    ssize_t k = ::send(fd_, p, n, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      raise_errno("send failed");
    }
    if (k == 0) throw ProtocolError("socket", "peer closed during send");
    p += k;
    n -= size_t(k);
  }
}

void Socket::recv_all(void* data, size_t n) {
  auto* p = static_cast<uint8_t*>(data);
  while (n > 0) {
    ssize_t k = ::recv(fd_, p, n, 0);
    if (k < 0) {
      if (errno == EINTR) continue;
      raise_errno("recv failed");
    }
    if (k == 0) throw ProtocolError("socket", "peer disconnected");
    p += k;
    n -= size_t(k);
  }
}

size_t Socket::recv_some(void* data, size_t n) {
  ssize_t k = ::recv(fd_, data, n, MSG_DONTWAIT);
  if (k < 0) {
    if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) return 0;
    raise_errno("recv failed");
  }
  if (k == 0) throw ProtocolError("socket", "peer disconnected");
  return size_t(k);
}

WireMessage Socket::recv_message() {
  uint8_t lenbuf[4];
  recv_all(lenbuf, 4);
  uint32_t length = get_u32le(lenbuf);
  if (length == 0 || length > kMaxFrameBytes)
    throw ProtocolError("socket",
                        "bad frame length " + std::to_string(length));
  std::vector<uint8_t> body(length);
  recv_all(body.data(), length);
  return decode_frame_body(body.data(), body.size());
}

Listener::Listener(const std::string& host, uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) raise_errno("socket failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host.empty() || host == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{}, *res = nullptr;
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
      throw ProtocolError("socket", "cannot resolve host " + host);
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    raise_errno("bind to " + host + ":" + std::to_string(port) + " failed");
  if (::listen(fd_, 64) != 0) raise_errno("listen failed");

  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

Listener::~Listener() { close(); }

Listener::Listener(Listener&& other) noexcept
    : fd_(other.fd_), port_(other.port_) {
  other.fd_ = -1;
}

void Listener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Socket Listener::accept() {
  for (;;) {
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      raise_errno("accept failed");
    }
    set_no_delay(fd);
    return Socket(fd);
  }
}

Socket tcp_connect(const std::string& host, uint16_t port, int timeout_ms) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  std::string target = host.empty() ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, target.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{}, *res = nullptr;
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    if (::getaddrinfo(target.c_str(), nullptr, &hints, &res) != 0 || !res)
      throw ProtocolError("socket", "cannot resolve host " + target);
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }

  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::milliseconds(timeout_ms);
  for (;;) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) raise_errno("socket failed");
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
      set_no_delay(fd);
      return Socket(fd);
    }
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline)
      throw ProtocolError("socket", "cannot connect to " + target + ":" +
                                        std::to_string(port));
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

void ring_exchange(Socket& to_next, Socket& from_prev, const uint8_t* out,
                   size_t out_n, uint8_t* in, size_t in_n) {
  size_t sent = 0, received = 0;
  while (sent < out_n || received < in_n) {
    pollfd pfds[2];
    pfds[0] = {to_next.fd(), short(sent < out_n ? POLLOUT : 0), 0};
    pfds[1] = {from_prev.fd(), short(received < in_n ? POLLIN : 0), 0};
    int rc = ::poll(pfds, 2, 120000);
    if (rc < 0) {
      if (errno == EINTR) continue;
      raise_errno("poll failed");
    }
    if (rc == 0) throw ProtocolError("socket", "ring exchange timed out");

    if ((pfds[0].revents & (POLLERR | POLLHUP | POLLNVAL)) && sent < out_n)
      throw ProtocolError("socket", "ring successor disconnected");
    if ((pfds[0].revents & POLLOUT) && sent < out_n) {
      ssize_t k = ::send(to_next.fd(), out + sent, out_n - sent,
                         MSG_NOSIGNAL | MSG_DONTWAIT);
      if (k < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR)
        raise_errno("ring send failed");
      if (k > 0) sent += size_t(k);
    }
    if ((pfds[1].revents & POLLIN) && received < in_n) {
      ssize_t k = ::recv(from_prev.fd(), in + received, in_n - received,
                         MSG_DONTWAIT);
      if (k == 0)
        throw ProtocolError("socket", "ring predecessor disconnected");
      if (k < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR)
        raise_errno("ring recv failed");
      if (k > 0) received += size_t(k);
    } else if ((pfds[1].revents & (POLLERR | POLLHUP | POLLNVAL)) &&
               received < in_n) {
      throw ProtocolError("socket", "ring predecessor disconnected");
    }
  }
}

}  // namespace hepml::dist
