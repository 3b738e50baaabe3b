"""Depth-damage curve, interior flood depth, and loss categories.

Traces the damage curve over its control points, then assesses a small block
of parcels against a flood surface and aggregates the outcomes.
"""

from floodline.risk import DDF_POINTS_FT, aggregate, assess_parcel, ddf, fdis, loss, sensitivity

print("depth (ft)  depth (m)  damage")
for depth_ft, fraction in DDF_POINTS_FT:
    print(f"{depth_ft:9.0f}  {depth_ft * 0.3048:9.2f}  {ddf(depth_ft * 0.3048):6.1%}")
print(f"below -2 ft the curve floors at 0; above 16 ft it caps at {ddf(10.0):.1%}\n")

surface = 3.4  # flood surface elevation (m)
street = 2.8
print(f"flood surface {surface} m, street grade {street} m")
for hdsl in (0.15, 0.6, 1.2):
    depth = fdis(surface, street, hdsl)
    print(f"  floor {hdsl:.2f} m above street -> FDIS {depth:+.2f} m, "
          f"loss on $250k home: ${loss(250_000, depth):,.0f}")

# a toy block: two flooded, one clearance, one without elevation data, one dry
records = [
    assess_parcel("a", "block", 250_000, "extracted", 0.15, street, surface, fathom_sample=surface),
    assess_parcel("b", "block", 180_000, "imputed", 0.30, street, surface, fathom_sample=surface),
    assess_parcel("c", "block", 320_000, "extracted", 1.20, street, surface, fathom_sample=surface),
    assess_parcel("d", "block", 150_000, "missing", None, street, surface, fathom_sample=surface),
    assess_parcel("e", "block", 210_000, "extracted", 0.30, street, None, fathom_sample=None),
]
summary = aggregate(records, "aoi")[0]
print(f"\ncategories: {summary.counts} (partition of {summary.n_parcels} parcels)")
print(f"total loss ${summary.total_loss_usd:,.0f}, median among damaged ${summary.median_loss_among_damaged:,.0f}")
print(f"value at risk ${summary.value_at_risk_usd:,.0f}")

pair = sensitivity(records)[0]
print(f"\nwithout imputed values, loss would be ${pair.extracted_only.total_loss_usd:,.0f}; "
      f"imputation adds ${pair.loss_delta_usd:,.0f}")
