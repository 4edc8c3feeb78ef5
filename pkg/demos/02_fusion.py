"""Two bills for one user disagree; fusion keeps the latest non-null value per attribute.

Run: python3 demos/02_fusion.py
"""
import datetime as dt

from billprep.clean import NULL_VALUE, CleanValue
from billprep.fuse import FusionGroup, Member, resolve_most_recent_non_null, year_of_birth

january = dt.date(2021, 1, 15)
march = dt.date(2021, 3, 20)

# the older bill knows the sex, the newer one only the age
members = [
    Member(january, "b1", {"sex": CleanValue("text", "M"), "year_of_birth": CleanValue("integer", year_of_birth(20, january))}),
    Member(march, "b2", {"sex": NULL_VALUE, "year_of_birth": CleanValue("integer", year_of_birth(21, march))}),
]
for m in members:
    print(m.bill_id, m.bill_date, {k: v.render() for k, v in m.values.items()})

fused = resolve_most_recent_non_null(FusionGroup("user-1", members))
print("fused:", {k: v.render() for k, v in fused.items()})
# the fused record matches neither bill on its own
