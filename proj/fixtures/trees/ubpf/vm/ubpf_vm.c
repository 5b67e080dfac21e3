// Copyright (c) diffharness contributors
// SPDX-License-Identifier: Apache-2.0
// Fixture tree: a condensed userspace eBPF interpreter loop.

#include <stdbool.h>
#include <stdint.h>
#include <string.h>
#include "ebpf.h"
#include "ubpf_int.h"

#define UBPF_STACK_SIZE 512

static uint32_t
u32(uint64_t x)
{
    return x;
}

static bool
bounds_check(const struct ubpf_vm* vm, void* addr, int size, const char* type, uint16_t cur_pc, void* mem,
             size_t mem_len, void* stack)
{
    if (mem && (addr >= mem && ((char*)addr + size) <= ((char*)mem + mem_len))) {
        return true;
    } else if (addr >= stack && ((char*)addr + size) <= ((char*)stack + UBPF_STACK_SIZE)) {
        return true;
    }
    vm->error_printf(stderr, "uBPF error: out of bounds memory %s at PC %u, addr %p, size %d\n", type, cur_pc,
                     addr, size);
    return false;
}

int
ubpf_exec(const struct ubpf_vm* vm, void* mem, size_t mem_len, uint64_t* bpf_return_value)
{
    uint16_t pc = 0;
    const struct ebpf_inst* insts = vm->insts;
    uint64_t reg[16];
    uint64_t stack[(UBPF_STACK_SIZE + 7) / 8];

    /* registers start out zeroed; reading one before writing it is allowed */
    memset(reg, 0, sizeof(reg));
    reg[1] = (uintptr_t)mem;
    reg[2] = (uint64_t)mem_len;
    reg[10] = (uintptr_t)stack + sizeof(stack);

    while (1) {
        const uint16_t cur_pc = pc;
        struct ebpf_inst inst = insts[pc++];

        switch (inst.opcode) {
        case EBPF_OP_ADD_IMM:
            reg[inst.dst] += inst.imm;
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_ADD_REG:
            reg[inst.dst] += reg[inst.src];
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_SUB_IMM:
            reg[inst.dst] -= inst.imm;
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_SUB_REG:
            reg[inst.dst] -= reg[inst.src];
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_MUL_IMM:
            reg[inst.dst] *= inst.imm;
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_MUL_REG:
            reg[inst.dst] *= reg[inst.src];
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_DIV_IMM:
            /* offset 1 selects signed division */
            if (inst.offset == 1) {
                reg[inst.dst] = inst.imm ? u32((int32_t)reg[inst.dst] / inst.imm) : 0;
            } else {
                reg[inst.dst] = u32(inst.imm) ? u32(reg[inst.dst]) / u32(inst.imm) : 0;
            }
            break;
        case EBPF_OP_DIV_REG:
            if (u32(reg[inst.src]) == 0) {
                vm->error_printf(stderr, "uBPF error: division by zero at PC %u\n", cur_pc);
                return -1;
            }
            reg[inst.dst] = u32(reg[inst.dst]) / u32(reg[inst.src]);
            break;
        case EBPF_OP_OR_IMM:
            reg[inst.dst] |= inst.imm;
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_OR_REG:
            reg[inst.dst] |= reg[inst.src];
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_AND_IMM:
            reg[inst.dst] &= inst.imm;
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_AND_REG:
            reg[inst.dst] &= reg[inst.src];
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_LSH_IMM:
            reg[inst.dst] = u32(reg[inst.dst]) << (inst.imm & 31);
            break;
        case EBPF_OP_LSH_REG:
            reg[inst.dst] = u32(reg[inst.dst]) << (reg[inst.src] & 31);
            break;
        case EBPF_OP_RSH_IMM:
            reg[inst.dst] = u32(reg[inst.dst]) >> (inst.imm & 31);
            break;
        case EBPF_OP_RSH_REG:
            reg[inst.dst] = u32(reg[inst.dst]) >> (reg[inst.src] & 31);
            break;
        case EBPF_OP_NEG:
            reg[inst.dst] = -(int64_t)reg[inst.dst];
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_MOD_IMM:
            if (inst.offset == 1) {
                reg[inst.dst] = inst.imm ? u32((int32_t)reg[inst.dst] % inst.imm) : u32(reg[inst.dst]);
            } else {
                reg[inst.dst] = u32(inst.imm) ? u32(reg[inst.dst]) % u32(inst.imm) : u32(reg[inst.dst]);
            }
            break;
        case EBPF_OP_MOD_REG:
            if (u32(reg[inst.src]) == 0) {
                vm->error_printf(stderr, "uBPF error: division by zero at PC %u\n", cur_pc);
                return -1;
            }
            reg[inst.dst] = u32(reg[inst.dst]) % u32(reg[inst.src]);
            break;
        case EBPF_OP_XOR_IMM:
            reg[inst.dst] ^= inst.imm;
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_XOR_REG:
            reg[inst.dst] ^= reg[inst.src];
            reg[inst.dst] &= UINT32_MAX;
            break;
        case EBPF_OP_MOV_IMM:
            reg[inst.dst] = u32(inst.imm);
            break;
        case EBPF_OP_MOV_REG:
            /* EBPF_OP_MOVSX_REG when the offset is non-zero */
            if (inst.offset == 8) {
                reg[inst.dst] = u32((int32_t)(int8_t)reg[inst.src]);
            } else if (inst.offset == 16) {
                reg[inst.dst] = u32((int32_t)(int16_t)reg[inst.src]);
            } else {
                reg[inst.dst] = u32(reg[inst.src]);
            }
            break;
        case EBPF_OP_ARSH_IMM:
            reg[inst.dst] = u32((int32_t)reg[inst.dst] >> (inst.imm & 31));
            break;
        case EBPF_OP_ARSH_REG:
            reg[inst.dst] = u32((int32_t)reg[inst.dst] >> (reg[inst.src] & 31));
            break;
        case EBPF_OP_LE:
            if (inst.imm == 16) {
                reg[inst.dst] = (uint16_t)reg[inst.dst];
            } else if (inst.imm == 32) {
                reg[inst.dst] = (uint32_t)reg[inst.dst];
            }
            break;
        case EBPF_OP_BE:
        case EBPF_OP_BSWAP:
            if (inst.imm == 16) {
                reg[inst.dst] = __builtin_bswap16(reg[inst.dst]);
            } else if (inst.imm == 32) {
                reg[inst.dst] = __builtin_bswap32(reg[inst.dst]);
            } else if (inst.imm == 64) {
                reg[inst.dst] = __builtin_bswap64(reg[inst.dst]);
            }
            break;

        case EBPF_OP_ADD64_IMM:
            reg[inst.dst] += inst.imm;
            break;
        case EBPF_OP_ADD64_REG:
            reg[inst.dst] += reg[inst.src];
            break;
        case EBPF_OP_SUB64_IMM:
            reg[inst.dst] -= inst.imm;
            break;
        case EBPF_OP_SUB64_REG:
            reg[inst.dst] -= reg[inst.src];
            break;
        case EBPF_OP_MUL64_IMM:
            reg[inst.dst] *= inst.imm;
            break;
        case EBPF_OP_MUL64_REG:
            reg[inst.dst] *= reg[inst.src];
            break;
        case EBPF_OP_DIV64_IMM:
            if (inst.offset == 1) {
                reg[inst.dst] = inst.imm ? (int64_t)reg[inst.dst] / inst.imm : 0;
            } else {
                reg[inst.dst] = inst.imm ? reg[inst.dst] / (uint64_t)(int64_t)inst.imm : 0;
            }
            break;
        case EBPF_OP_DIV64_REG:
            if (reg[inst.src] == 0) {
                vm->error_printf(stderr, "uBPF error: division by zero at PC %u\n", cur_pc);
                return -1;
            }
            reg[inst.dst] /= reg[inst.src];
            break;
        case EBPF_OP_OR64_IMM:
            reg[inst.dst] |= inst.imm;
            break;
        case EBPF_OP_OR64_REG:
            reg[inst.dst] |= reg[inst.src];
            break;
        case EBPF_OP_AND64_IMM:
            reg[inst.dst] &= inst.imm;
            break;
        case EBPF_OP_AND64_REG:
            reg[inst.dst] &= reg[inst.src];
            break;
        case EBPF_OP_LSH64_IMM:
            reg[inst.dst] <<= (inst.imm & 63);
            break;
        case EBPF_OP_LSH64_REG:
            reg[inst.dst] <<= (reg[inst.src] & 63);
            break;
        case EBPF_OP_RSH64_IMM:
            reg[inst.dst] >>= (inst.imm & 63);
            break;
        case EBPF_OP_RSH64_REG:
            reg[inst.dst] >>= (reg[inst.src] & 63);
            break;
        case EBPF_OP_NEG64:
            reg[inst.dst] = -reg[inst.dst];
            break;
        case EBPF_OP_MOD64_IMM:
            if (inst.offset == 1) {
                reg[inst.dst] = inst.imm ? (int64_t)reg[inst.dst] % inst.imm : reg[inst.dst];
            } else {
                reg[inst.dst] = inst.imm ? reg[inst.dst] % (uint64_t)(int64_t)inst.imm : reg[inst.dst];
            }
            break;
        case EBPF_OP_MOD64_REG:
            if (reg[inst.src] == 0) {
                vm->error_printf(stderr, "uBPF error: division by zero at PC %u\n", cur_pc);
                return -1;
            }
            reg[inst.dst] %= reg[inst.src];
            break;
        case EBPF_OP_XOR64_IMM:
            reg[inst.dst] ^= inst.imm;
            break;
        case EBPF_OP_XOR64_REG:
            reg[inst.dst] ^= reg[inst.src];
            break;
        case EBPF_OP_MOV64_IMM:
            reg[inst.dst] = inst.imm;
            break;
        case EBPF_OP_MOV64_REG:
            /* EBPF_OP_MOVSX64_REG when the offset is non-zero */
            if (inst.offset == 8) {
                reg[inst.dst] = (int64_t)(int8_t)reg[inst.src];
            } else if (inst.offset == 16) {
                reg[inst.dst] = (int64_t)(int16_t)reg[inst.src];
            } else if (inst.offset == 32) {
                reg[inst.dst] = (int64_t)(int32_t)reg[inst.src];
            } else {
                reg[inst.dst] = reg[inst.src];
            }
            break;
        case EBPF_OP_ARSH64_IMM:
            reg[inst.dst] = (int64_t)reg[inst.dst] >> (inst.imm & 63);
            break;
        case EBPF_OP_ARSH64_REG:
            reg[inst.dst] = (int64_t)reg[inst.dst] >> (reg[inst.src] & 63);
            break;

#define BOUNDS_CHECK_LOAD(size)                                                                              \
    do {                                                                                                     \
        if (!bounds_check(vm, (char*)reg[inst.src] + inst.offset, size, "load", cur_pc, mem, mem_len, stack)) { \
            return -1;                                                                                       \
        }                                                                                                    \
    } while (0)
#define BOUNDS_CHECK_STORE(size)                                                                             \
    do {                                                                                                     \
        if (!bounds_check(vm, (char*)reg[inst.dst] + inst.offset, size, "store", cur_pc, mem, mem_len, stack)) { \
            return -1;                                                                                       \
        }                                                                                                    \
    } while (0)

        case EBPF_OP_LDXW:
            BOUNDS_CHECK_LOAD(4);
            reg[inst.dst] = *(uint32_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case EBPF_OP_LDXH:
            BOUNDS_CHECK_LOAD(2);
            reg[inst.dst] = *(uint16_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case EBPF_OP_LDXB:
            BOUNDS_CHECK_LOAD(1);
            reg[inst.dst] = *(uint8_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case EBPF_OP_LDXDW:
            BOUNDS_CHECK_LOAD(8);
            reg[inst.dst] = *(uint64_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case EBPF_OP_LDXSW:
            BOUNDS_CHECK_LOAD(4);
            reg[inst.dst] = (int64_t) * (int32_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case EBPF_OP_LDXSH:
            BOUNDS_CHECK_LOAD(2);
            reg[inst.dst] = (int64_t) * (int16_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;
        case EBPF_OP_LDXSB:
            BOUNDS_CHECK_LOAD(1);
            reg[inst.dst] = (int64_t) * (int8_t*)(uintptr_t)(reg[inst.src] + inst.offset);
            break;

        case EBPF_OP_STW:
            BOUNDS_CHECK_STORE(4);
            *(uint32_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = inst.imm;
            break;
        case EBPF_OP_STH:
            BOUNDS_CHECK_STORE(2);
            *(uint16_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = inst.imm;
            break;
        case EBPF_OP_STB:
            BOUNDS_CHECK_STORE(1);
            *(uint8_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = inst.imm;
            break;
        case EBPF_OP_STDW:
            BOUNDS_CHECK_STORE(8);
            *(uint64_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = inst.imm;
            break;

        case EBPF_OP_STXW:
            BOUNDS_CHECK_STORE(4);
            *(uint32_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = reg[inst.src];
            break;
        case EBPF_OP_STXH:
            BOUNDS_CHECK_STORE(2);
            *(uint16_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = reg[inst.src];
            break;
        case EBPF_OP_STXB:
            BOUNDS_CHECK_STORE(1);
            *(uint8_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = reg[inst.src];
            break;
        case EBPF_OP_STXDW:
            BOUNDS_CHECK_STORE(8);
            *(uint64_t*)(uintptr_t)(reg[inst.dst] + inst.offset) = reg[inst.src];
            break;

        case EBPF_OP_LDDW:
            reg[inst.dst] = u32(inst.imm) | ((uint64_t)insts[pc++].imm << 32);
            break;

        case EBPF_OP_JA:
            pc += inst.offset;
            break;
        case EBPF_OP_JEQ_IMM:
            if (reg[inst.dst] == (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JEQ_REG:
            if (reg[inst.dst] == reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JGT_IMM:
            if (reg[inst.dst] > (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JGT_REG:
            if (reg[inst.dst] > reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JGE_IMM:
            if (reg[inst.dst] >= (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JGE_REG:
            if (reg[inst.dst] >= reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JLT_IMM:
            if (reg[inst.dst] < (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JLT_REG:
            if (reg[inst.dst] < reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JLE_IMM:
            if (reg[inst.dst] <= (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JLE_REG:
            if (reg[inst.dst] <= reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JSET_IMM:
            if (reg[inst.dst] & inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JSET_REG:
            if (reg[inst.dst] & reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JNE_IMM:
            if (reg[inst.dst] != (uint64_t)(int64_t)inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JNE_REG:
            if (reg[inst.dst] != reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JSGT_IMM:
            if ((int64_t)reg[inst.dst] > inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JSGT_REG:
            if ((int64_t)reg[inst.dst] > (int64_t)reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JSGE_IMM:
            if ((int64_t)reg[inst.dst] >= inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JSGE_REG:
            if ((int64_t)reg[inst.dst] >= (int64_t)reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JSLT_IMM:
            if ((int64_t)reg[inst.dst] < inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JSLT_REG:
            if ((int64_t)reg[inst.dst] < (int64_t)reg[inst.src]) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JSLE_IMM:
            if ((int64_t)reg[inst.dst] <= inst.imm) {
                pc += inst.offset;
            }
            break;
        case EBPF_OP_JSLE_REG:
            if ((int64_t)reg[inst.dst] <= (int64_t)reg[inst.src]) {
                pc += inst.offset;
            }
            break;

        case EBPF_OP_EXIT:
            *bpf_return_value = reg[0];
            return 0;
        case EBPF_OP_CALL:
            if (inst.imm >= MAX_EXT_FUNCS || !vm->ext_funcs[inst.imm]) {
                vm->error_printf(stderr, "uBPF error: unknown helper function %d at PC %u\n", inst.imm, cur_pc);
                return -1;
            }
            reg[0] = vm->ext_funcs[inst.imm](reg[1], reg[2], reg[3], reg[4], reg[5]);
            break;
        default:
            vm->error_printf(stderr, "uBPF error: unknown opcode 0x%02x at PC %u\n", inst.opcode, cur_pc);
            return -1;
        }
    }
}
