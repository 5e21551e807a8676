#include "drd/rng.hpp"

namespace drd::rng {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive(std::uint64_t parent, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix(parent);
  for (std::uint64_t key : path) h = mix(h ^ mix(key + 0x632be59bd9b4e019ULL));
  return h;
}

Vector Stream::gaussian_vector(int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal_(engine_);
  return v;
}

std::size_t Stream::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

}  // namespace drd::rng
