// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
int main() { std::puts("viscofem: CLI not wired yet"); return 0; }
