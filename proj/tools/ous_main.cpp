#include <cstdio>

int main() {
  std::puts("ous: command-line interface not wired up yet");
  return 2;
}
