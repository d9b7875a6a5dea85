import dataclasses

import numpy as np
import pytest

from echopath.errors import PhantomSpecError
from echopath.metrics import cnr, contour_volume
from echopath.phantom import (
    PhantomSpec,
    generate_phantom,
    perturb_uips,
    run_monte_carlo,
)


def quick_spec(**kw):
    base = dict(n_frames=1, cycle_fraction=0.0, target_cnr=5.0)
    base.update(kw)
    return PhantomSpec(**base)


class TestGeneratePhantom:
    def test_cnr_round_trip(self):
        for target in (1.0, 3.0, 5.0, 7.0):
            spec = quick_spec(target_cnr=target)
            _, truth = generate_phantom(spec)
            assert abs(truth.measured_cnr - target) <= 0.2
            seq, _ = generate_phantom(spec)
            measured = cnr(seq.frames[0], truth.cnr_cavity_mask, truth.cnr_myo_mask)
            assert abs(measured - target) <= 0.2

    def test_zero_cycle_constant_volume(self):
        spec = PhantomSpec(n_frames=6, cycle_fraction=0.0, target_cnr=5.0)
        _, truth = generate_phantom(spec)
        assert np.allclose(truth.volumes_ml, truth.volumes_ml[0])

    def test_seed_reproducible(self):
        spec = PhantomSpec(n_frames=3, target_cnr=4.0, seed=11)
        seq1, _ = generate_phantom(spec)
        seq2, _ = generate_phantom(spec)
        assert np.array_equal(seq1.frames, seq2.frames)

    def test_seed_changes_noise(self):
        seq1, _ = generate_phantom(quick_spec(seed=1))
        seq2, _ = generate_phantom(quick_spec(seed=2))
        assert not np.array_equal(seq1.frames, seq2.frames)

    def test_unreachable_cnr(self):
        with pytest.raises(PhantomSpecError):
            generate_phantom(quick_spec(target_cnr=40.0))

    def test_geometry_must_fit(self):
        with pytest.raises(PhantomSpecError):
            PhantomSpec(image_size=(120, 120))

    def test_volume_consistency_with_disks(self):
        spec = PhantomSpec(n_frames=2, target_cnr=5.0)
        _, truth = generate_phantom(spec)
        for t in range(2):
            uip = truth.uips.entry(t)
            base_mid = (uip.mv_left + uip.mv_right) / 2.0
            v = contour_volume(
                truth.endo_px[t], spec.pixel_spacing,
                axis=(base_mid, uip.apex + (uip.apex - base_mid) * 0.05),
            )
            assert v == pytest.approx(truth.volumes_ml[t], rel=0.02)

    def test_endo_inside_epi(self):
        spec = PhantomSpec(n_frames=2, target_cnr=5.0)
        _, truth = generate_phantom(spec)
        assert np.all(truth.epi_volumes_ml > truth.volumes_ml)

    def test_dropout_darkens_sector(self):
        clean_seq, truth = generate_phantom(quick_spec())
        drop_seq, _ = generate_phantom(quick_spec(dropout=(150.0, 210.0, 0.2)))
        # the attenuated sector loses wall intensity relative to the clean render
        diff = clean_seq.frames[0] - drop_seq.frames[0]
        assert diff.max() > 0.2

    def test_wall_conserves_ring_area(self):
        spec = PhantomSpec()
        r0 = spec.cavity_radius_mm
        for s in (1.0, 0.9, 0.8, 0.74):
            w = spec.wall_at(s)
            ring = (s * r0 + w) ** 2 - (s * r0) ** 2
            assert ring == pytest.approx((r0 + spec.wall_mm) ** 2 - r0**2, rel=1e-12)


class TestPerturbUips:
    def test_zero_magnitude_exact(self, still_phantom):
        _, _, truth = still_phantom
        uips = perturb_uips(truth, 0.0, seed=5)
        entry = truth.uips.entry(0)
        got = uips.entry(0)
        assert np.allclose(got.apex, entry.apex)
        assert np.allclose(got.mv_left, entry.mv_left)

    def test_seed_reproducible(self, still_phantom):
        _, _, truth = still_phantom
        a = perturb_uips(truth, 0.5, seed=9)
        b = perturb_uips(truth, 0.5, seed=9)
        assert np.allclose(a.apex, b.apex)
        assert np.allclose(a.mv_right, b.mv_right)

    def test_norm_bounded_over_many_draws(self, still_phantom):
        _, _, truth = still_phantom
        band = truth.band_width_px()
        entry = truth.uips.entry(0)
        for seed in range(1000):
            pts = perturb_uips(truth, 1.0, seed=seed).entry(0)
            for p0, p1 in zip((entry.apex, entry.mv_left, entry.mv_right),
                              (pts.apex, pts.mv_left, pts.mv_right)):
                assert np.hypot(*(p1 - p0)) <= band + 1e-9


class TestMonteCarlo:
    def test_single_trial(self):
        spec = PhantomSpec(n_frames=8, period_frames=8, target_cnr=5.0)
        res = run_monte_carlo(spec, trials=1, magnitude=0.0, jobs=1)
        assert len(res.records) == 1
        assert res.std_dice == 0.0
        assert res.mean_dice > 0.7

    def test_reproducible_aggregate(self):
        spec = PhantomSpec(n_frames=6, period_frames=6, target_cnr=5.0)
        r1 = run_monte_carlo(spec, trials=2, magnitude=0.3, jobs=1, seed=77)
        r2 = run_monte_carlo(spec, trials=2, magnitude=0.3, jobs=1, seed=77)
        assert r1.mean_dice == r2.mean_dice
        assert [r["seed"] for r in r1.records] == [r["seed"] for r in r2.records]
