#include <cstdio>

int main() {
    std::puts("horai: CLI under construction");
    return 0;
}
