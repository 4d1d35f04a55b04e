// 21 helpers, check_key and _start: 23 functions in .text.
static volatile int counter;
static const char banner[] = "license check v1";

__attribute__((noinline)) int helper_0(int x) {
  return x + counter;
}

__attribute__((noinline)) int helper_1(int x) {
  counter += 2;
  if (counter > 101) return counter ^ 1;
  return helper_0(x + 1);
}

__attribute__((noinline)) int helper_2(int x) {
  counter += 3;
  if (counter > 102) return counter ^ 2;
  return helper_1(x + 1);
}

__attribute__((noinline)) int helper_3(int x) {
  counter += 4;
  if (counter > 103) return counter ^ 3;
  return helper_2(x + 1);
}

__attribute__((noinline)) int helper_4(int x) {
  counter += 5;
  if (counter > 104) return counter ^ 4;
  return helper_3(x + 1);
}

__attribute__((noinline)) int helper_5(int x) {
  counter += 6;
  if (counter > 105) return counter ^ 5;
  return helper_4(x + 1);
}

__attribute__((noinline)) int helper_6(int x) {
  counter += 7;
  if (counter > 106) return counter ^ 6;
  return helper_5(x + 1);
}

__attribute__((noinline)) int helper_7(int x) {
  counter += 8;
  if (counter > 107) return counter ^ 7;
  return helper_6(x + 1);
}

__attribute__((noinline)) int helper_8(int x) {
  counter += 9;
  if (counter > 108) return counter ^ 8;
  return helper_7(x + 1);
}

__attribute__((noinline)) int helper_9(int x) {
  counter += 10;
  if (counter > 109) return counter ^ 9;
  return helper_8(x + 1);
}

__attribute__((noinline)) int helper_10(int x) {
  counter += 11;
  if (counter > 110) return counter ^ 10;
  return helper_9(x + 1);
}

__attribute__((noinline)) int helper_11(int x) {
  counter += 12;
  if (counter > 111) return counter ^ 11;
  return helper_10(x + 1);
}

__attribute__((noinline)) int helper_12(int x) {
  counter += 13;
  if (counter > 112) return counter ^ 12;
  return helper_11(x + 1);
}

__attribute__((noinline)) int helper_13(int x) {
  counter += 14;
  if (counter > 113) return counter ^ 13;
  return helper_12(x + 1);
}

__attribute__((noinline)) int helper_14(int x) {
  counter += 15;
  if (counter > 114) return counter ^ 14;
  return helper_13(x + 1);
}

__attribute__((noinline)) int helper_15(int x) {
  counter += 16;
  if (counter > 115) return counter ^ 15;
  return helper_14(x + 1);
}

__attribute__((noinline)) int helper_16(int x) {
  counter += 17;
  if (counter > 116) return counter ^ 16;
  return helper_15(x + 1);
}

__attribute__((noinline)) int helper_17(int x) {
  counter += 18;
  if (counter > 117) return counter ^ 17;
  return helper_16(x + 1);
}

__attribute__((noinline)) int helper_18(int x) {
  counter += 19;
  if (counter > 118) return counter ^ 18;
  return helper_17(x + 1);
}

__attribute__((noinline)) int helper_19(int x) {
  counter += 20;
  if (counter > 119) return counter ^ 19;
  return helper_18(x + 1);
}

__attribute__((noinline)) int helper_20(int x) {
  counter += 21;
  if (counter > 120) return counter ^ 20;
  return helper_19(x + 1);
}

__attribute__((noinline)) int check_key(const char* s) {
  int h = 0;
  for (; *s; ++s) h = h * 31 + *s;
  return h == helper_20(7) ? banner[0] : 0;
}

void _start(void) {
  int r = check_key(banner);
  __asm__ volatile("mov %0, %%edi\n mov $60, %%eax\n syscall" :: "r"(r) : "rdi", "rax");
  for (;;) {}
}
