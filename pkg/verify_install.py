"""
Simple script to verify the introspect_vmc installation.

Usage:
    python verify_install.py
"""

import sys


def verify_installation():
    """Verify the introspect_vmc package is properly installed."""

    print("=" * 60)
    print("Introspect VMC - Installation Verification")
    print("=" * 60)

    # Test 1: Import main package
    print("\n1. Testing package import...")
    try:
        import introspect_vmc
        print("   ✓ Package imported successfully")
        print(f"   ✓ Version: {introspect_vmc.__version__}")
    except ImportError as e:
        print(f"   ✗ Failed to import package: {e}")
        return False

    # Test 2: Import exceptions
    print("\n2. Testing exceptions import...")
    try:
        from introspect_vmc import (
            ArtifactChainError,
            ConfigurationError,
            DimensionError,
            IntrospectVMCError,
        )
        assert issubclass(ArtifactChainError, IntrospectVMCError)
        assert issubclass(ConfigurationError, IntrospectVMCError)
        assert issubclass(DimensionError, IntrospectVMCError)
        print("   ✓ All exceptions imported successfully")
    except ImportError as e:
        print(f"   ✗ Failed to import exceptions: {e}")
        return False

    # Test 3: Build a small policy and sample it
    print("\n3. Testing policy sampling...")
    try:
        import numpy as np

        from introspect_vmc import PolicyConfig, PolicyModel
        from introspect_vmc.env.types import ObservationMode
        from introspect_vmc.nn import LstmMemory
        from introspect_vmc.uncertainty import mc_sample, uncertainty_from_samples

        config = PolicyConfig(obs_mode=ObservationMode.ORACLE_STATE, frames=2, lstm_width=8, fc_width=8)
        model = PolicyModel(config, np.random.default_rng(0))
        s = np.zeros(config.state_width)
        samples, _, _ = mc_sample(model, s, LstmMemory.zeros(config.lstm_width), 10, 0, 0)
        u = uncertainty_from_samples(samples, config.lam)
        print(f"   ✓ Drew 10 Monte-Carlo samples, uncertainty {u:.3g}")
    except Exception as e:
        print(f"   ✗ Failed to sample the policy: {e}")
        return False

    # Test 4: Run one simulator episode with the scripted expert
    print("\n4. Testing simulator and expert...")
    try:
        from introspect_vmc.env.demos import run_expert_episode
        from introspect_vmc.env.types import Task

        record = run_expert_episode(Task.PICK_PLACE, 0, ObservationMode.ORACLE_STATE)
        print(f"   ✓ Expert finished in {len(record)} ticks (success: {record.success})")
    except Exception as e:
        print(f"   ✗ Failed to run the expert: {e}")
        return False

    # Test 5: Django harness (optional)
    print("\n5. Testing Django harness (optional)...")
    try:
        import django
        import os

        os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'introspect_vmc.harness.settings')
        django.setup()
        from django.core.management import get_commands

        commands = get_commands()
        missing = [name for name in ('gen_demos', 'train', 'evaluate', 'selftest') if name not in commands]
        if missing:
            print(f"   ✗ Management commands not registered: {', '.join(missing)}")
            return False
        print(f"   ✓ Django {django.get_version()} harness loaded")
    except ImportError:
        print("   ⚠ Django not installed (the ivmc commands need it)")

    print("\n" + "=" * 60)
    print("✓ All checks passed!")
    print("=" * 60)
    return True


if __name__ == "__main__":
    success = verify_installation()
    sys.exit(0 if success else 1)
