#include <cstdio>

int main() {
  std::puts("hnmt: placeholder");
  return 0;
}
