#include <cstdio>

int main() {
    std::puts("pansharp: CLI under construction");
    return 0;
}
